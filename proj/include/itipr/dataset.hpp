#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace itipr {

struct RawRecord {
  std::string user_id;
  std::string item_id;
  std::optional<double> rating;     // explicit rating in [0,5] when present
  std::optional<std::int64_t> timestamp;  // parsed, never used
};

struct LoadResult {
  std::vector<RawRecord> records;
  int malformed_lines = 0;
  int rejected_records = 0;  // rating outside [0,5]
};

// Deduplicated implicit-feedback interactions over dense 0-based indices.
// Index maps are built from lexicographically sorted external ids, so the
// structure is independent of input record order.
class InteractionSet {
 public:
  int n_users() const { return static_cast<int>(user_ids_.size()); }
  int n_items() const { return static_cast<int>(item_ids_.size()); }
  std::int64_t n_interactions() const { return n_interactions_; }

  const std::vector<std::int32_t>& items_of(int user) const { return user_items_[user]; }
  bool has(int user, int item) const;
  int user_degree(int user) const { return static_cast<int>(user_items_[user].size()); }
  int item_degree(int item) const { return item_degrees_[item]; }

  const std::string& user_id(int user) const { return user_ids_[user]; }
  const std::string& item_id(int item) const { return item_ids_[item]; }
  int user_index(const std::string& id) const;  // -1 when absent
  int item_index(const std::string& id) const;

  // Builder used by binarize/filter/split. Pairs may repeat; duplicates collapse.
  static InteractionSet from_pairs(std::vector<std::string> user_ids,
                                   std::vector<std::string> item_ids,
                                   const std::vector<std::pair<std::int32_t, std::int32_t>>& pairs);

  bool operator==(const InteractionSet& other) const;

 private:
  std::vector<std::string> user_ids_;
  std::vector<std::string> item_ids_;
  std::unordered_map<std::string, std::int32_t> user_index_;
  std::unordered_map<std::string, std::int32_t> item_index_;
  std::vector<std::vector<std::int32_t>> user_items_;  // sorted per user
  std::vector<std::int32_t> item_degrees_;
  std::int64_t n_interactions_ = 0;
};

enum class Role { train, validation, test };

// Per-user disjoint partition of one InteractionSet; the three parts share
// the parent's index space and id maps.
struct SplitInteractions {
  InteractionSet train;
  InteractionSet validation;
  InteractionSet test;

  const InteractionSet& part(Role r) const {
    return r == Role::train ? train : (r == Role::validation ? validation : test);
  }
};

LoadResult load_records(const std::string& path, bool has_ratings);

InteractionSet binarize(const std::vector<RawRecord>& records, double threshold = 3.0);

InteractionSet filter_by_activity(const InteractionSet& s, int min_user_degree,
                                  int min_item_degree);

struct SplitRatios {
  int train = 8;
  int validation = 1;
  int test = 1;
};

SplitInteractions split(const InteractionSet& s, const SplitRatios& ratios, std::uint64_t seed);

// Snapshot rows: user,item,split  (external ids; split in {train,validation,test}).
void write_split_csv(const SplitInteractions& s, const std::string& path);
SplitInteractions read_split_csv(const std::string& path);

}  // namespace itipr
