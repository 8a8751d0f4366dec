#include "mixteach/config.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "mixteach/kitti_io.hpp"
#include "mixteach/log.hpp"
#include "mixteach/text_format.hpp"

namespace mixteach::pipeline {
namespace {

struct Entry {
  std::string value;
  std::size_t line = 0;
};

using Section = std::map<std::string, Entry>;

std::string Join(const std::vector<std::string>& items) {
  std::string out;
  for (const auto& s : items) out += (out.empty() ? "" : ",") + s;
  return out;
}

std::vector<std::string> SplitList(std::string_view value) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (pos <= value.size()) {
    auto comma = value.find(',', pos);
    if (comma == std::string_view::npos) comma = value.size();
    const auto item = text::Trim(value.substr(pos, comma - pos));
    if (!item.empty()) out.emplace_back(item);
    pos = comma + 1;
  }
  return out;
}

class Reader {
 public:
  Reader(std::string section, Section entries, fs::path base)
      : section_(std::move(section)), entries_(std::move(entries)), base_(std::move(base)) {}

  std::string Field(const std::string& key) const { return section_ + "." + key; }

  const Entry* Take(const std::string& key) {
    auto it = entries_.find(key);
    if (it == entries_.end()) return nullptr;
    taken_.push_back(key);
    return &it->second;
  }

  void Real(const std::string& key, double& out) {
    if (const Entry* e = Take(key)) {
      auto v = text::ParseDouble(text::Trim(e->value));
      if (!v) throw ValidationError(Field(key), "not a number: '" + e->value + "'");
      out = *v;
    }
  }

  void Real(const std::string& key, std::optional<double>& out) {
    if (Take(key) != nullptr) {
      double v = 0.0;
      taken_.pop_back();
      Real(key, v);
      out = v;
    }
  }

  template <typename Int>
  void Integer(const std::string& key, Int& out) {
    if (const Entry* e = Take(key)) {
      auto v = text::ParseInt(text::Trim(e->value));
      if (!v) throw ValidationError(Field(key), "not an integer: '" + e->value + "'");
      if (*v < 0 && std::is_unsigned_v<Int>) throw ValidationError(Field(key), "must be >= 0");
      out = static_cast<Int>(*v);
    }
  }

  void Uint64(const std::string& key, std::uint64_t& out) {
    if (const Entry* e = Take(key)) {
      auto v = text::ParseUint64(text::Trim(e->value));
      if (!v) throw ValidationError(Field(key), "not an unsigned 64-bit integer: '" + e->value + "'");
      out = *v;
    }
  }

  void Bool(const std::string& key, bool& out) {
    if (const Entry* e = Take(key)) {
      const auto v = text::Trim(e->value);
      if (v == "true" || v == "1" || v == "yes") {
        out = true;
      } else if (v == "false" || v == "0" || v == "no") {
        out = false;
      } else {
        throw ValidationError(Field(key), "not a boolean: '" + e->value + "'");
      }
    }
  }

  void Path(const std::string& key, fs::path& out) {
    if (const Entry* e = Take(key)) out = Resolve(text::Trim(e->value));
  }

  void PathList(const std::string& key, std::vector<fs::path>& out) {
    if (const Entry* e = Take(key)) {
      out.clear();
      for (const auto& item : SplitList(e->value)) out.push_back(Resolve(item));
    }
  }

  void List(const std::string& key, std::vector<std::string>& out) {
    if (const Entry* e = Take(key)) out = SplitList(e->value);
  }

  // Anything not consumed is an unknown key.
  void Finish() const {
    for (const auto& [key, entry] : entries_) {
      if (std::find(taken_.begin(), taken_.end(), key) == taken_.end()) {
        throw ValidationError(Field(key), "unknown key (line " + std::to_string(entry.line) + ")");
      }
    }
  }

 private:
  fs::path Resolve(std::string_view value) const {
    if (value.empty()) return {};
    fs::path p{std::string(value)};
    if (p.is_relative()) p = base_ / p;
    return fs::absolute(p).lexically_normal();
  }

  std::string section_;
  Section entries_;
  fs::path base_;
  std::vector<std::string> taken_;
};

void RequireDir(const fs::path& p, const std::string& field, bool required) {
  if (p.empty()) {
    if (required) throw ValidationError(field, "required");
    return;
  }
  if (!fs::is_directory(p)) throw ValidationError(field, "directory does not exist: " + p.string());
}

std::string Num(double v) { return text::FormatExact(v); }
std::string Bool(bool b) { return b ? "true" : "false"; }

}  // namespace

ParseError::ParseError(fs::path file, std::size_t line, const std::string& what)
    : Error(ErrorCode::kParseError,
            (file.empty() ? std::string("<config>") : file.string()) + ":" + std::to_string(line) + ": " + what),
      line_(line) {}

PipelineConfig ParseConfig(const std::string& text_in, const fs::path& base_dir, const fs::path& source) {
  std::map<std::string, Section> sections;
  std::string current;
  std::istringstream in(text_in);
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string_view line = text::Trim(raw);
    if (line.empty() || line.front() == '#' || line.front() == ';') continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ParseError(source, line_no, "unterminated section header");
      current = std::string(text::Trim(line.substr(1, line.size() - 2)));
      if (current.empty()) throw ParseError(source, line_no, "empty section name");
      if (sections.contains(current)) throw ParseError(source, line_no, "duplicate section [" + current + "]");
      sections[current];
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ParseError(source, line_no, "expected 'key = value'");
    if (current.empty()) throw ParseError(source, line_no, "key outside of any section");
    const std::string key(text::Trim(line.substr(0, eq)));
    if (key.empty()) throw ParseError(source, line_no, "empty key");
    std::string value(text::Trim(line.substr(eq + 1)));
    auto& sec = sections[current];
    if (sec.contains(key)) throw ParseError(source, line_no, "duplicate key '" + key + "'");
    sec[key] = Entry{std::move(value), line_no};
  }

  PipelineConfig cfg;
  cfg.source = source;
  for (auto& [name, entries] : sections) {
    Reader r(name, entries, base_dir);
    if (name == "dataset") {
      r.Path("labeled_dir", cfg.dataset.labeled_dir);
      r.Path("image_dir", cfg.dataset.image_dir);
      r.Path("calib_dir", cfg.dataset.calib_dir);
      r.Path("unlabeled_dir", cfg.dataset.unlabeled_dir);
      r.Path("exclusion_list", cfg.dataset.exclusion_list);
      r.Path("gt_dir", cfg.dataset.gt_dir);
    } else if (name == "ensemble") {
      r.PathList("prediction_dirs", cfg.prediction_dirs);
    } else if (name == "uncertainty") {
      r.Real("cluster_iou_thr", cfg.uncertainty.cluster_iou_thr);
      r.Real("beta", cfg.uncertainty.beta);
      r.Bool("dedupe_same_model", cfg.uncertainty.dedupe_same_model);
      r.Bool("same_category_only", cfg.uncertainty.same_category_only);
    } else if (name == "curation") {
      r.Real("conf_thr", cfg.curation.conf_thr);
      r.Real("unc_thr", cfg.curation.unc_thr);
      std::vector<std::string> cats;
      r.List("categories", cats);
      if (!cats.empty()) cfg.curation.categories = {cats.begin(), cats.end()};
      r.Bool("existence_uses_filtered", cfg.curation.existence_uses_filtered);
    } else if (name == "mix") {
      auto& m = cfg.mix;
      r.Real("p_background", m.p_background);
      r.Real("p_border_cut", m.p_border_cut);
      r.Real("p_color_pad", m.p_color_pad);
      r.Real("border_cut_ratio_min", m.border_cut_ratio_min);
      r.Real("border_cut_ratio_max", m.border_cut_ratio_max);
      r.Real("mixup_weight_min", m.mixup_weight_min);
      r.Real("mixup_weight_max", m.mixup_weight_max);
      r.Real("collision_iou_thr", m.collision_iou_thr);
      r.Integer("max_paste_attempts", m.max_paste_attempts);
      r.Integer("paste_count_min", m.paste_count_min);
      r.Integer("paste_count_max", m.paste_count_max);
      r.Real("min_visible_fraction", m.min_visible_fraction);
      r.Real("calib_tolerance", m.calib_tolerance);
      r.Integer("sample_count", cfg.sample_count);
    } else if (name == "eval") {
      r.Real("iou_thr", cfg.eval_iou_thr);
      if (const Entry* e = r.Take("metric")) {
        if (e->value == "3d") {
          cfg.eval_metric = eval::IouMetric::k3d;
        } else if (e->value == "bev") {
          cfg.eval_metric = eval::IouMetric::kBev;
        } else {
          throw ValidationError("eval.metric", "must be '3d' or 'bev'");
        }
      }
      r.List("categories", cfg.eval_categories);
    } else if (name == "loss") {
      r.Real("lambda", cfg.loss.lambda);
    } else if (name == "pipeline") {
      r.Path("output_root", cfg.output_root);
      r.Integer("stage_count", cfg.stage_count);
      r.Uint64("master_seed", cfg.mix.master_seed);
      r.Integer("workers", cfg.workers);
    } else if (name.starts_with("stage.")) {
      const auto idx = text::ParseInt(std::string_view(name).substr(6));
      if (!idx || *idx < 1) throw ValidationError(name, "stage sections are [stage.K] with K >= 1");
      StageOverride& o = cfg.stages[static_cast<int>(*idx)];
      r.PathList("prediction_dirs", o.prediction_dirs);
      r.Real("conf_thr", o.conf_thr);
      r.Real("unc_thr", o.unc_thr);
    } else {
      throw ValidationError(name, "unknown section");
    }
    r.Finish();
  }
  return cfg;
}

void ValidateConfig(const PipelineConfig& cfg, bool check_paths) {
  ensemble::Validate(cfg.uncertainty);
  curation::Validate(cfg.curation);
  mix::Validate(cfg.mix);
  eval::EvalConfig ec;
  ec.iou_thr = cfg.eval_iou_thr;
  eval::Validate(ec);
  if (!std::isfinite(cfg.loss.lambda) || cfg.loss.lambda < 0.0) {
    throw ValidationError("loss.lambda", "must be a finite non-negative number");
  }
  if (cfg.stage_count < 1) throw ValidationError("pipeline.stage_count", "must be >= 1");
  if (cfg.workers < 1) throw ValidationError("pipeline.workers", "must be >= 1");
  if (cfg.prediction_dirs.empty()) throw ValidationError("ensemble.prediction_dirs", "need at least one model");
  if (cfg.output_root.empty()) throw ValidationError("pipeline.output_root", "required");
  for (const auto& [k, o] : cfg.stages) {
    const std::string f = "stage." + std::to_string(k);
    if (k > cfg.stage_count) throw ValidationError(f, "stage index exceeds pipeline.stage_count");
    if (o.conf_thr && !(*o.conf_thr >= 0.0 && *o.conf_thr <= 1.0)) throw ValidationError(f + ".conf_thr", "must lie in [0, 1]");
    if (o.unc_thr && !(*o.unc_thr >= 0.0 && *o.unc_thr <= 1.0)) throw ValidationError(f + ".unc_thr", "must lie in [0, 1]");
  }
  if (cfg.prediction_dirs.size() != 5) {
    log::Info("ensemble of " + std::to_string(cfg.prediction_dirs.size()) + " models (5 is the usual setting)");
  }
  if (!check_paths) return;
  RequireDir(cfg.dataset.labeled_dir, "dataset.labeled_dir", true);
  RequireDir(cfg.dataset.image_dir, "dataset.image_dir", true);
  RequireDir(cfg.dataset.calib_dir, "dataset.calib_dir", true);
  RequireDir(cfg.dataset.unlabeled_dir, "dataset.unlabeled_dir", false);
  RequireDir(cfg.dataset.gt_dir, "dataset.gt_dir", false);
  if (!cfg.dataset.exclusion_list.empty() && !fs::is_regular_file(cfg.dataset.exclusion_list)) {
    throw ValidationError("dataset.exclusion_list", "file does not exist: " + cfg.dataset.exclusion_list.string());
  }
}

PipelineConfig LoadConfig(const fs::path& path) {
  const std::string content = kitti::ReadTextFile(path);
  const fs::path base = fs::absolute(path).parent_path();
  PipelineConfig cfg = ParseConfig(content, base, path);
  ValidateConfig(cfg);
  return cfg;
}

PipelineConfig EffectiveConfig(const PipelineConfig& cfg, int stage_index) {
  PipelineConfig out = cfg;
  auto it = cfg.stages.find(stage_index);
  if (it == cfg.stages.end()) return out;
  const StageOverride& o = it->second;
  if (!o.prediction_dirs.empty()) out.prediction_dirs = o.prediction_dirs;
  if (o.conf_thr) out.curation.conf_thr = *o.conf_thr;
  if (o.unc_thr) out.curation.unc_thr = *o.unc_thr;
  return out;
}

std::string CanonicalConfigText(const PipelineConfig& cfg) {
  auto paths = [](const std::vector<fs::path>& ps) {
    std::vector<std::string> s;
    for (const auto& p : ps) s.push_back(p.string());
    return Join(s);
  };
  std::ostringstream o;
  o << "[dataset]\n"
    << "labeled_dir = " << cfg.dataset.labeled_dir.string() << "\n"
    << "image_dir = " << cfg.dataset.image_dir.string() << "\n"
    << "calib_dir = " << cfg.dataset.calib_dir.string() << "\n"
    << "unlabeled_dir = " << cfg.dataset.unlabeled_dir.string() << "\n"
    << "exclusion_list = " << cfg.dataset.exclusion_list.string() << "\n"
    << "gt_dir = " << cfg.dataset.gt_dir.string() << "\n\n";
  o << "[ensemble]\nprediction_dirs = " << paths(cfg.prediction_dirs) << "\n\n";
  o << "[uncertainty]\n"
    << "cluster_iou_thr = " << Num(cfg.uncertainty.cluster_iou_thr) << "\n"
    << "beta = " << Num(cfg.uncertainty.beta) << "\n"
    << "dedupe_same_model = " << Bool(cfg.uncertainty.dedupe_same_model) << "\n"
    << "same_category_only = " << Bool(cfg.uncertainty.same_category_only) << "\n\n";
  o << "[curation]\n"
    << "conf_thr = " << Num(cfg.curation.conf_thr) << "\n"
    << "unc_thr = " << Num(cfg.curation.unc_thr) << "\n"
    << "categories = " << Join({cfg.curation.categories.begin(), cfg.curation.categories.end()}) << "\n"
    << "existence_uses_filtered = " << Bool(cfg.curation.existence_uses_filtered) << "\n\n";
  const auto& m = cfg.mix;
  o << "[mix]\n"
    << "p_background = " << Num(m.p_background) << "\n"
    << "p_border_cut = " << Num(m.p_border_cut) << "\n"
    << "p_color_pad = " << Num(m.p_color_pad) << "\n"
    << "border_cut_ratio_min = " << Num(m.border_cut_ratio_min) << "\n"
    << "border_cut_ratio_max = " << Num(m.border_cut_ratio_max) << "\n"
    << "mixup_weight_min = " << Num(m.mixup_weight_min) << "\n"
    << "mixup_weight_max = " << Num(m.mixup_weight_max) << "\n"
    << "collision_iou_thr = " << Num(m.collision_iou_thr) << "\n"
    << "max_paste_attempts = " << m.max_paste_attempts << "\n"
    << "paste_count_min = " << m.paste_count_min << "\n"
    << "paste_count_max = " << m.paste_count_max << "\n"
    << "min_visible_fraction = " << Num(m.min_visible_fraction) << "\n"
    << "calib_tolerance = " << Num(m.calib_tolerance) << "\n"
    << "sample_count = " << cfg.sample_count << "\n\n";
  o << "[eval]\n"
    << "iou_thr = " << Num(cfg.eval_iou_thr) << "\n"
    << "metric = " << eval::IouMetricName(cfg.eval_metric) << "\n"
    << "categories = " << Join(cfg.eval_categories) << "\n\n";
  o << "[loss]\nlambda = " << Num(cfg.loss.lambda) << "\n\n";
  o << "[pipeline]\n"
    << "output_root = " << cfg.output_root.string() << "\n"
    << "stage_count = " << cfg.stage_count << "\n"
    << "master_seed = " << cfg.mix.master_seed << "\n"
    << "workers = " << cfg.workers << "\n";
  for (const auto& [k, st] : cfg.stages) {
    o << "\n[stage." << k << "]\n";
    if (!st.prediction_dirs.empty()) o << "prediction_dirs = " << paths(st.prediction_dirs) << "\n";
    if (st.conf_thr) o << "conf_thr = " << Num(*st.conf_thr) << "\n";
    if (st.unc_thr) o << "unc_thr = " << Num(*st.unc_thr) << "\n";
  }
  return o.str();
}

}  // namespace mixteach::pipeline
