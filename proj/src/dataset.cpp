#include "itipr/dataset.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "itipr/rng.hpp"

namespace itipr {

bool InteractionSet::has(int user, int item) const {
  const auto& v = user_items_[user];
  return std::binary_search(v.begin(), v.end(), static_cast<std::int32_t>(item));
}

int InteractionSet::user_index(const std::string& id) const {
  auto it = user_index_.find(id);
  return it == user_index_.end() ? -1 : it->second;
}

int InteractionSet::item_index(const std::string& id) const {
  auto it = item_index_.find(id);
  return it == item_index_.end() ? -1 : it->second;
}

InteractionSet InteractionSet::from_pairs(
    std::vector<std::string> user_ids, std::vector<std::string> item_ids,
    const std::vector<std::pair<std::int32_t, std::int32_t>>& pairs) {
  InteractionSet s;
  s.user_ids_ = std::move(user_ids);
  s.item_ids_ = std::move(item_ids);
  for (std::int32_t u = 0; u < static_cast<std::int32_t>(s.user_ids_.size()); ++u)
    s.user_index_.emplace(s.user_ids_[u], u);
  for (std::int32_t i = 0; i < static_cast<std::int32_t>(s.item_ids_.size()); ++i)
    s.item_index_.emplace(s.item_ids_[i], i);
  s.user_items_.assign(s.user_ids_.size(), {});
  s.item_degrees_.assign(s.item_ids_.size(), 0);
  for (const auto& [u, i] : pairs) {
    if (u < 0 || u >= s.n_users() || i < 0 || i >= s.n_items())
      throw std::out_of_range("interaction index out of range");
    s.user_items_[u].push_back(i);
  }
  for (auto& v : s.user_items_) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    for (std::int32_t i : v) s.item_degrees_[i]++;
    s.n_interactions_ += static_cast<std::int64_t>(v.size());
  }
  return s;
}

bool InteractionSet::operator==(const InteractionSet& other) const {
  return user_ids_ == other.user_ids_ && item_ids_ == other.item_ids_ &&
         user_items_ == other.user_items_;
}

namespace {

std::vector<std::string> split_fields(const std::string& line, char delim) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == delim) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  for (auto& f : out) {
    while (!f.empty() && (f.back() == '\r' || f.back() == ' ')) f.pop_back();
    std::size_t b = 0;
    while (b < f.size() && f[b] == ' ') ++b;
    f = f.substr(b);
  }
  return out;
}

bool parse_double(const std::string& s, double& out) {
  if (s.empty()) return false;
  char* end = nullptr;
  out = std::strtod(s.c_str(), &end);
  return end == s.c_str() + s.size();
}

bool parse_int64(const std::string& s, std::int64_t& out) {
  if (s.empty()) return false;
  char* end = nullptr;
  out = std::strtoll(s.c_str(), &end, 10);
  return end == s.c_str() + s.size();
}

std::string lower(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

}  // namespace

LoadResult load_records(const std::string& path, bool has_ratings) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open interaction file: " + path);

  LoadResult result;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    const char delim = line.find('\t') != std::string::npos ? '\t' : ',';
    auto fields = split_fields(line, delim);

    if (first) {
      first = false;
      // Header detection: a non-numeric rating field, or the conventional
      // user/item column names on rating-less files.
      double dummy;
      bool header = false;
      if (has_ratings && fields.size() >= 3 && !parse_double(fields[2], dummy))
        header = true;
      if (!has_ratings && fields.size() >= 2) {
        std::string a = lower(fields[0]), b = lower(fields[1]);
        if ((a == "user" || a == "user_id" || a == "userid") &&
            (b == "item" || b == "item_id" || b == "itemid"))
          header = true;
      }
      if (header) continue;
    }

    if (fields.size() < 2 || fields[0].empty() || fields[1].empty()) {
      result.malformed_lines++;
      continue;
    }
    RawRecord rec;
    rec.user_id = fields[0];
    rec.item_id = fields[1];
    std::size_t ts_field = 2;
    if (has_ratings) {
      if (fields.size() < 3) {
        result.malformed_lines++;
        continue;
      }
      double r;
      if (!parse_double(fields[2], r)) {
        result.malformed_lines++;
        continue;
      }
      if (r < 0.0 || r > 5.0) {
        result.rejected_records++;
        continue;
      }
      rec.rating = r;
      ts_field = 3;
    }
    if (fields.size() > ts_field) {
      std::int64_t ts;
      if (parse_int64(fields[ts_field], ts)) rec.timestamp = ts;
    }
    result.records.push_back(std::move(rec));
  }
  if (result.malformed_lines > 0)
    std::fprintf(stderr, "warning: %d malformed line(s) skipped in %s\n",
                 result.malformed_lines, path.c_str());
  if (result.rejected_records > 0)
    std::fprintf(stderr, "warning: %d record(s) with rating outside [0,5] rejected in %s\n",
                 result.rejected_records, path.c_str());
  return result;
}

InteractionSet binarize(const std::vector<RawRecord>& records, double threshold) {
  std::set<std::pair<std::string, std::string>> kept;
  for (const auto& r : records) {
    if (r.rating.has_value() && !(*r.rating > threshold)) continue;
    kept.emplace(r.user_id, r.item_id);
  }
  std::set<std::string> users, items;
  for (const auto& [u, i] : kept) {
    users.insert(u);
    items.insert(i);
  }
  std::vector<std::string> user_ids(users.begin(), users.end());
  std::vector<std::string> item_ids(items.begin(), items.end());
  std::unordered_map<std::string, std::int32_t> umap, imap;
  for (std::int32_t k = 0; k < static_cast<std::int32_t>(user_ids.size()); ++k)
    umap[user_ids[k]] = k;
  for (std::int32_t k = 0; k < static_cast<std::int32_t>(item_ids.size()); ++k)
    imap[item_ids[k]] = k;
  std::vector<std::pair<std::int32_t, std::int32_t>> pairs;
  pairs.reserve(kept.size());
  for (const auto& [u, i] : kept) pairs.emplace_back(umap[u], imap[i]);
  return InteractionSet::from_pairs(std::move(user_ids), std::move(item_ids), pairs);
}

InteractionSet filter_by_activity(const InteractionSet& s, int min_user_degree,
                                  int min_item_degree) {
  if (min_user_degree < 0 || min_item_degree < 0)
    throw std::invalid_argument("activity thresholds must be >= 0");

  std::vector<bool> keep_user(s.n_users(), true), keep_item(s.n_items(), true);
  std::vector<int> udeg(s.n_users()), ideg(s.n_items());
  for (int u = 0; u < s.n_users(); ++u) udeg[u] = s.user_degree(u);
  for (int i = 0; i < s.n_items(); ++i) ideg[i] = s.item_degree(i);

  bool changed = true;
  while (changed) {
    changed = false;
    for (int u = 0; u < s.n_users(); ++u) {
      if (keep_user[u] && udeg[u] < min_user_degree) {
        keep_user[u] = false;
        changed = true;
        for (std::int32_t i : s.items_of(u))
          if (keep_item[i]) ideg[i]--;
      }
    }
    for (int i = 0; i < s.n_items(); ++i) {
      if (keep_item[i] && ideg[i] < min_item_degree) {
        keep_item[i] = false;
        changed = true;
      }
    }
    if (changed) {
      // Recount user degrees against surviving items.
      for (int u = 0; u < s.n_users(); ++u) {
        if (!keep_user[u]) continue;
        int d = 0;
        for (std::int32_t i : s.items_of(u))
          if (keep_item[i]) d++;
        udeg[u] = d;
      }
    }
  }

  std::vector<std::string> user_ids, item_ids;
  std::vector<std::int32_t> umap(s.n_users(), -1), imap(s.n_items(), -1);
  for (int u = 0; u < s.n_users(); ++u)
    if (keep_user[u]) {
      umap[u] = static_cast<std::int32_t>(user_ids.size());
      user_ids.push_back(s.user_id(u));
    }
  for (int i = 0; i < s.n_items(); ++i)
    if (keep_item[i]) {
      imap[i] = static_cast<std::int32_t>(item_ids.size());
      item_ids.push_back(s.item_id(i));
    }
  std::vector<std::pair<std::int32_t, std::int32_t>> pairs;
  for (int u = 0; u < s.n_users(); ++u) {
    if (!keep_user[u]) continue;
    for (std::int32_t i : s.items_of(u))
      if (keep_item[i]) pairs.emplace_back(umap[u], imap[i]);
  }
  if (pairs.empty())
    throw std::runtime_error(
        "activity filter removed every interaction (thresholds " +
        std::to_string(min_user_degree) + "/" + std::to_string(min_item_degree) + ")");
  return InteractionSet::from_pairs(std::move(user_ids), std::move(item_ids), pairs);
}

SplitInteractions split(const InteractionSet& s, const SplitRatios& ratios, std::uint64_t seed) {
  if (ratios.train <= 0 || ratios.validation <= 0 || ratios.test <= 0)
    throw std::invalid_argument("split ratios must be positive");
  const double total = ratios.train + ratios.validation + ratios.test;

  std::vector<std::string> user_ids, item_ids;
  for (int u = 0; u < s.n_users(); ++u) user_ids.push_back(s.user_id(u));
  for (int i = 0; i < s.n_items(); ++i) item_ids.push_back(s.item_id(i));

  std::vector<std::pair<std::int32_t, std::int32_t>> train, val, test;
  for (int u = 0; u < s.n_users(); ++u) {
    std::vector<std::int32_t> items = s.items_of(u);
    const int n = static_cast<int>(items.size());
    if (n < 3) {
      // Too few items to populate three parts; whole user goes to train.
      for (std::int32_t i : items) train.emplace_back(u, i);
      continue;
    }
    Rng rng(mix_seed(seed, 0x5b717u, static_cast<std::uint64_t>(u)));
    rng.shuffle(items);
    int nv = std::max(1, static_cast<int>(n * ratios.validation / total));
    int nt = std::max(1, static_cast<int>(n * ratios.test / total));
    while (n - nv - nt < 1) (nv > nt ? nv : nt)--;  // keep at least one train item
    for (int k = 0; k < n; ++k) {
      if (k < nv)
        val.emplace_back(u, items[k]);
      else if (k < nv + nt)
        test.emplace_back(u, items[k]);
      else
        train.emplace_back(u, items[k]);
    }
  }

  SplitInteractions out;
  out.train = InteractionSet::from_pairs(user_ids, item_ids, train);
  out.validation = InteractionSet::from_pairs(user_ids, item_ids, val);
  out.test = InteractionSet::from_pairs(user_ids, item_ids, test);
  return out;
}

void write_split_csv(const SplitInteractions& s, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write split snapshot: " + path);
  out << "user,item,split\n";
  auto dump = [&](const InteractionSet& part, const char* tag) {
    for (int u = 0; u < part.n_users(); ++u)
      for (std::int32_t i : part.items_of(u))
        out << part.user_id(u) << ',' << part.item_id(i) << ',' << tag << '\n';
  };
  dump(s.train, "train");
  dump(s.validation, "validation");
  dump(s.test, "test");
}

SplitInteractions read_split_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open split snapshot: " + path);
  std::string line;
  std::getline(in, line);  // header
  std::set<std::string> users, items;
  std::vector<std::tuple<std::string, std::string, std::string>> rows;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    auto f = split_fields(line, ',');
    if (f.size() != 3) throw std::runtime_error("bad split snapshot row: " + line);
    users.insert(f[0]);
    items.insert(f[1]);
    rows.emplace_back(f[0], f[1], f[2]);
  }
  std::vector<std::string> user_ids(users.begin(), users.end());
  std::vector<std::string> item_ids(items.begin(), items.end());
  std::unordered_map<std::string, std::int32_t> umap, imap;
  for (std::int32_t k = 0; k < static_cast<std::int32_t>(user_ids.size()); ++k)
    umap[user_ids[k]] = k;
  for (std::int32_t k = 0; k < static_cast<std::int32_t>(item_ids.size()); ++k)
    imap[item_ids[k]] = k;

  std::vector<std::pair<std::int32_t, std::int32_t>> train, val, test;
  for (const auto& [u, i, tag] : rows) {
    auto pair = std::make_pair(umap[u], imap[i]);
    if (tag == "train")
      train.push_back(pair);
    else if (tag == "validation")
      val.push_back(pair);
    else if (tag == "test")
      test.push_back(pair);
    else
      throw std::runtime_error("unknown split tag: " + tag);
  }
  SplitInteractions out;
  out.train = InteractionSet::from_pairs(user_ids, item_ids, train);
  out.validation = InteractionSet::from_pairs(user_ids, item_ids, val);
  out.test = InteractionSet::from_pairs(user_ids, item_ids, test);
  return out;
}

}  // namespace itipr
