#include "itipr/config.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace itipr {

using nlohmann::json;

namespace {

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

ConfigFile ConfigFile::parse_string(const std::string& text) {
  ConfigFile cfg;
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw std::runtime_error("config line " + std::to_string(lineno) + ": bad table header");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("config line " + std::to_string(lineno) + ": expected key = value");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"')
      value = value.substr(1, value.size() - 2);
    if (key.empty())
      throw std::runtime_error("config line " + std::to_string(lineno) + ": empty key");
    cfg.values_[section.empty() ? key : section + "." + key] = value;
  }
  return cfg;
}

ConfigFile ConfigFile::parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_string(buf.str());
}

std::string ConfigFile::get_string(const std::string& key, const std::string& fallback) const {
  auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

double ConfigFile::get_double(const std::string& key, double fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  try {
    return std::stod(it->second);
  } catch (...) {
    throw std::runtime_error("config key " + key + " is not a number: " + it->second);
  }
}

std::int64_t ConfigFile::get_int(const std::string& key, std::int64_t fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  try {
    return std::stoll(it->second);
  } catch (...) {
    throw std::runtime_error("config key " + key + " is not an integer: " + it->second);
  }
}

bool ConfigFile::get_bool(const std::string& key, bool fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  if (it->second == "true" || it->second == "1") return true;
  if (it->second == "false" || it->second == "0") return false;
  throw std::runtime_error("config key " + key + " is not a boolean: " + it->second);
}

PipelineConfig load_pipeline_config(const std::string& path) {
  PipelineConfig cfg;
  ConfigFile f;
  if (!path.empty()) f = ConfigFile::parse_file(path);

  cfg.data_path = f.get_string("dataset.path", cfg.data_path);
  cfg.has_ratings = f.get_bool("dataset.has_ratings", cfg.has_ratings);
  cfg.binarize_threshold = f.get_double("dataset.binarize_threshold", cfg.binarize_threshold);
  cfg.min_user_degree = static_cast<int>(f.get_int("dataset.min_user_degree", cfg.min_user_degree));
  cfg.min_item_degree = static_cast<int>(f.get_int("dataset.min_item_degree", cfg.min_item_degree));
  cfg.ratios.train = static_cast<int>(f.get_int("dataset.ratio_train", cfg.ratios.train));
  cfg.ratios.validation = static_cast<int>(f.get_int("dataset.ratio_validation", cfg.ratios.validation));
  cfg.ratios.test = static_cast<int>(f.get_int("dataset.ratio_test", cfg.ratios.test));

  cfg.synth.n_users = static_cast<int>(f.get_int("synthetic.users", cfg.synth.n_users));
  cfg.synth.n_items = static_cast<int>(f.get_int("synthetic.items", cfg.synth.n_items));
  cfg.synth.n_groups = static_cast<int>(f.get_int("synthetic.groups", cfg.synth.n_groups));
  cfg.synth.interactions_per_user =
      static_cast<int>(f.get_int("synthetic.interactions_per_user", cfg.synth.interactions_per_user));
  cfg.synth.noise_rate = f.get_double("synthetic.noise_rate", cfg.synth.noise_rate);

  cfg.model.backbone = backbone_from_name(f.get_string("model.backbone", backbone_name(cfg.model.backbone)));
  cfg.model.dim = static_cast<int>(f.get_int("model.dim", cfg.model.dim));
  cfg.model.lightgcn_layers =
      static_cast<int>(f.get_int("model.lightgcn_layers", cfg.model.lightgcn_layers));

  cfg.negatives_per_positive =
      static_cast<int>(f.get_int("triplets.negatives_per_positive", cfg.negatives_per_positive));

  cfg.mc.tolerance_rel = f.get_double("shapley.tolerance_rel", cfg.mc.tolerance_rel);
  if (f.has("shapley.tolerance_abs")) cfg.mc.tolerance_abs = f.get_double("shapley.tolerance_abs", 0.0);
  cfg.mc.learning_rate = f.get_double("shapley.learning_rate", cfg.mc.learning_rate);
  cfg.mc.l2_reg = f.get_double("shapley.l2_reg", cfg.mc.l2_reg);
  cfg.mc.max_permutations =
      static_cast<int>(f.get_int("shapley.max_permutations", cfg.mc.max_permutations));
  cfg.mc.convergence_window =
      static_cast<int>(f.get_int("shapley.convergence_window", cfg.mc.convergence_window));
  cfg.mc.convergence_delta = f.get_double("shapley.convergence_delta", cfg.mc.convergence_delta);
  cfg.mc.fresh_init_per_permutation =
      f.get_bool("shapley.fresh_init_per_permutation", cfg.mc.fresh_init_per_permutation);
  cfg.mc.checkpoint_every =
      static_cast<int>(f.get_int("shapley.checkpoint_every", cfg.mc.checkpoint_every));
  cfg.use_cv = f.get_bool("shapley.use_cv", cfg.use_cv);
  cfg.cv.warmup = static_cast<int>(f.get_int("shapley.cv_warmup", cfg.cv.warmup));
  cfg.cv.vstar_position_sample =
      static_cast<int>(f.get_int("shapley.vstar_position_sample", cfg.cv.vstar_position_sample));

  cfg.resample.candidate_pool_size =
      static_cast<int>(f.get_int("resample.candidate_pool_size", cfg.resample.candidate_pool_size));
  cfg.resample.new_triplets_per_positive = static_cast<int>(
      f.get_int("resample.new_triplets_per_positive", cfg.resample.new_triplets_per_positive));
  cfg.resample.tip_hidden = static_cast<int>(f.get_int("resample.tip_hidden", cfg.resample.tip_hidden));
  cfg.resample.tip_epochs = static_cast<int>(f.get_int("resample.tip_epochs", cfg.resample.tip_epochs));
  cfg.resample.tip_lr = f.get_double("resample.tip_lr", cfg.resample.tip_lr);
  cfg.resample.tip_batch = static_cast<int>(f.get_int("resample.tip_batch", cfg.resample.tip_batch));

  cfg.weight_floor = f.get_double("train.weight_floor", cfg.weight_floor);
  cfg.unit_weights = f.get_bool("train.unit_weights", cfg.unit_weights);
  cfg.final_train.learning_rate = f.get_double("train.learning_rate", cfg.final_train.learning_rate);
  cfg.final_train.l2_reg = f.get_double("train.l2_reg", cfg.final_train.l2_reg);
  cfg.final_train.max_epochs = static_cast<int>(f.get_int("train.max_epochs", cfg.final_train.max_epochs));
  cfg.final_train.patience = static_cast<int>(f.get_int("train.patience", cfg.final_train.patience));
  cfg.final_train.batch_size = static_cast<int>(f.get_int("train.batch_size", cfg.final_train.batch_size));

  cfg.top_k = static_cast<int>(f.get_int("eval.k", cfg.top_k));
  cfg.acc_metric = metric_from_name(f.get_string("eval.metric", metric_name(cfg.acc_metric)));
  cfg.eval_user_sample = static_cast<int>(f.get_int("eval.user_sample", cfg.eval_user_sample));

  cfg.seed = static_cast<std::uint64_t>(f.get_int("run.seed", static_cast<std::int64_t>(cfg.seed)));
  cfg.workers = static_cast<int>(f.get_int("run.workers", cfg.workers));
  cfg.out_dir = f.get_string("run.out_dir", cfg.out_dir);

  // Environment overrides, paths only.
  if (const char* p = std::getenv("ITIPR_DATA_PATH")) cfg.data_path = p;
  if (const char* p = std::getenv("ITIPR_OUT_DIR")) cfg.out_dir = p;
  return cfg;
}

std::string pipeline_config_to_json(const PipelineConfig& cfg) {
  json j;
  j["dataset"] = {{"path", cfg.data_path},
                  {"has_ratings", cfg.has_ratings},
                  {"binarize_threshold", cfg.binarize_threshold},
                  {"min_user_degree", cfg.min_user_degree},
                  {"min_item_degree", cfg.min_item_degree},
                  {"ratio_train", cfg.ratios.train},
                  {"ratio_validation", cfg.ratios.validation},
                  {"ratio_test", cfg.ratios.test}};
  j["synthetic"] = {{"users", cfg.synth.n_users},
                    {"items", cfg.synth.n_items},
                    {"groups", cfg.synth.n_groups},
                    {"interactions_per_user", cfg.synth.interactions_per_user},
                    {"noise_rate", cfg.synth.noise_rate}};
  j["model"] = {{"backbone", backbone_name(cfg.model.backbone)},
                {"dim", cfg.model.dim},
                {"lightgcn_layers", cfg.model.lightgcn_layers}};
  j["triplets"] = {{"negatives_per_positive", cfg.negatives_per_positive}};
  json shapley = {{"tolerance_rel", cfg.mc.tolerance_rel},
                  {"learning_rate", cfg.mc.learning_rate},
                  {"l2_reg", cfg.mc.l2_reg},
                  {"max_permutations", cfg.mc.max_permutations},
                  {"convergence_window", cfg.mc.convergence_window},
                  {"convergence_delta", cfg.mc.convergence_delta},
                  {"fresh_init_per_permutation", cfg.mc.fresh_init_per_permutation},
                  {"use_cv", cfg.use_cv},
                  {"cv_warmup", cfg.cv.warmup},
                  {"vstar_position_sample", cfg.cv.vstar_position_sample}};
  if (cfg.mc.tolerance_abs.has_value()) shapley["tolerance_abs"] = *cfg.mc.tolerance_abs;
  j["shapley"] = shapley;
  j["resample"] = {{"candidate_pool_size", cfg.resample.candidate_pool_size},
                   {"new_triplets_per_positive", cfg.resample.new_triplets_per_positive},
                   {"tip_hidden", cfg.resample.tip_hidden},
                   {"tip_epochs", cfg.resample.tip_epochs},
                   {"tip_lr", cfg.resample.tip_lr},
                   {"tip_batch", cfg.resample.tip_batch}};
  j["train"] = {{"weight_floor", cfg.weight_floor},
                {"unit_weights", cfg.unit_weights},
                {"learning_rate", cfg.final_train.learning_rate},
                {"l2_reg", cfg.final_train.l2_reg},
                {"max_epochs", cfg.final_train.max_epochs},
                {"patience", cfg.final_train.patience},
                {"batch_size", cfg.final_train.batch_size}};
  j["eval"] = {{"k", cfg.top_k},
               {"metric", metric_name(cfg.acc_metric)},
               {"user_sample", cfg.eval_user_sample}};
  j["seed"] = cfg.seed;
  j["workers"] = cfg.workers;
  return j.dump();
}

}  // namespace itipr
