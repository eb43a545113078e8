#include "itipr/synthetic.hpp"

#include <cstdio>
#include <fstream>
#include <set>
#include <stdexcept>

#include "itipr/rng.hpp"

namespace itipr {

InteractionSet planted_preference(const SyntheticConfig& cfg) {
  if (cfg.n_users < 1 || cfg.n_items < 2 || cfg.n_groups < 1)
    throw std::invalid_argument("bad synthetic dimensions");
  if (cfg.interactions_per_user >= cfg.n_items)
    throw std::invalid_argument("interactions_per_user must leave room for negatives");

  // Contiguous item blocks per group.
  auto item_group = [&](int i) {
    return std::min(cfg.n_groups - 1, i * cfg.n_groups / cfg.n_items);
  };
  std::vector<std::vector<std::int32_t>> group_items(cfg.n_groups);
  for (int i = 0; i < cfg.n_items; ++i) group_items[item_group(i)].push_back(i);

  std::vector<std::pair<std::int32_t, std::int32_t>> pairs;
  for (int u = 0; u < cfg.n_users; ++u) {
    const int g = u % cfg.n_groups;
    Rng rng(mix_seed(cfg.seed, 0x5e17u, static_cast<std::uint64_t>(u)));
    std::set<std::int32_t> chosen;
    while (static_cast<int>(chosen.size()) < cfg.interactions_per_user) {
      std::int32_t item;
      if (rng.next_double() < cfg.noise_rate) {
        item = static_cast<std::int32_t>(rng.next_below(cfg.n_items));
      } else {
        const auto& own = group_items[g];
        item = own[rng.next_below(own.size())];
      }
      if (chosen.insert(item).second) pairs.emplace_back(u, item);
    }
  }

  std::vector<std::string> user_ids(cfg.n_users), item_ids(cfg.n_items);
  char buf[32];
  for (int u = 0; u < cfg.n_users; ++u) {
    std::snprintf(buf, sizeof(buf), "u%05d", u);
    user_ids[u] = buf;
  }
  for (int i = 0; i < cfg.n_items; ++i) {
    std::snprintf(buf, sizeof(buf), "i%05d", i);
    item_ids[i] = buf;
  }
  return InteractionSet::from_pairs(std::move(user_ids), std::move(item_ids), pairs);
}

void write_interactions_csv(const InteractionSet& s, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write interactions csv: " + path);
  for (int u = 0; u < s.n_users(); ++u)
    for (std::int32_t i : s.items_of(u)) out << s.user_id(u) << ',' << s.item_id(i) << '\n';
}

}  // namespace itipr
