#include "itipr/triplets.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <set>
#include <stdexcept>

#include "itipr/rng.hpp"

namespace itipr {

bool TripletSet::contains(const Triplet& t) const {
  return std::find(triplets.begin(), triplets.end(), t) != triplets.end();
}

bool in_space(int u, int i, int j, const InteractionSet& train) {
  if (i == j) return false;
  return train.has(u, i) && !train.has(u, j);
}

TripletSet sample_triplets(const InteractionSet& train, int negatives_per_positive,
                           std::uint64_t seed) {
  if (negatives_per_positive < 1 || negatives_per_positive > 10)
    throw std::invalid_argument("negatives_per_positive must be in [1,10]");

  TripletSet out;
  const int n_items = train.n_items();
  for (int u = 0; u < train.n_users(); ++u) {
    const auto& pos_items = train.items_of(u);
    if (pos_items.empty()) continue;
    if (static_cast<int>(pos_items.size()) >= n_items)
      throw std::runtime_error("user " + train.user_id(u) +
                               " interacted with every item; no negatives exist");
    Rng rng(mix_seed(seed, 0x7217u, static_cast<std::uint64_t>(u)));
    for (std::int32_t i : pos_items) {
      std::set<std::int32_t> negs;
      while (static_cast<int>(negs.size()) < negatives_per_positive) {
        auto j = static_cast<std::int32_t>(rng.next_below(static_cast<std::uint64_t>(n_items)));
        if (train.has(u, j) || negs.count(j)) continue;
        negs.insert(j);
        out.triplets.push_back({u, i, j});
        out.origins.push_back(TripletOrigin::initial);
      }
    }
  }
  return out;
}

Permutation sample_permutation(int n, std::uint64_t seed, std::uint64_t draw_index) {
  if (n < 1) throw std::invalid_argument("permutation size must be >= 1");
  Permutation p(n);
  std::iota(p.begin(), p.end(), 0);
  Rng rng(mix_seed(seed, 0x9e47u, draw_index));
  rng.shuffle(p);
  return p;
}

std::vector<Permutation> rotation_permutations(int n) {
  if (n < 1) throw std::invalid_argument("rotation family size must be >= 1");
  std::vector<Permutation> out;
  out.reserve(n);
  Permutation cur(n);
  std::iota(cur.begin(), cur.end(), 0);
  for (int k = 0; k < n; ++k) {
    out.push_back(cur);
    std::rotate(cur.rbegin(), cur.rbegin() + 1, cur.rend());  // last element to front
  }
  return out;
}

void write_triplets_csv(const TripletSet& ts, const InteractionSet& index_space,
                        const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write triplet csv: " + path);
  out << "user,pos_item,neg_item,origin\n";
  for (std::size_t k = 0; k < ts.size(); ++k) {
    const Triplet& t = ts.triplets[k];
    out << index_space.user_id(t.user) << ',' << index_space.item_id(t.pos) << ','
        << index_space.item_id(t.neg) << ','
        << (ts.origins[k] == TripletOrigin::initial ? "initial" : "resampled") << '\n';
  }
}

TripletSet read_triplets_csv(const InteractionSet& index_space, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open triplet csv: " + path);
  TripletSet out;
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    while (!line.empty() && line.back() == '\r') line.pop_back();
    std::vector<std::string> f;
    std::size_t start = 0;
    for (std::size_t pos = 0; pos <= line.size(); ++pos) {
      if (pos == line.size() || line[pos] == ',') {
        f.push_back(line.substr(start, pos - start));
        start = pos + 1;
      }
    }
    if (f.size() != 4) throw std::runtime_error("bad triplet row: " + line);
    Triplet t;
    t.user = index_space.user_index(f[0]);
    t.pos = index_space.item_index(f[1]);
    t.neg = index_space.item_index(f[2]);
    if (t.user < 0 || t.pos < 0 || t.neg < 0)
      throw std::runtime_error("triplet references unknown id: " + line);
    out.triplets.push_back(t);
    out.origins.push_back(f[3] == "resampled" ? TripletOrigin::resampled
                                              : TripletOrigin::initial);
  }
  return out;
}

}  // namespace itipr
