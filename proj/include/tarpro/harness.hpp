#ifndef TARPRO_HARNESS_HPP
#define TARPRO_HARNESS_HPP

// Experiment orchestration: load a benchmark, protect every image with one
// method, edit with every eval prompt, score, and aggregate into a report row.
//
// Pairings:
//   normal rows     edit(protect(x), y_nor)  vs  edit(x, y_nor)
//   malicious rows  edit(protect(x), y_mal)  vs  edit(x, parent(y_mal))
//   perturbation    protect(x)               vs  x

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "json.hpp"

#include "tarpro/baselines.hpp"
#include "tarpro/core_types.hpp"
#include "tarpro/editor.hpp"
#include "tarpro/io.hpp"
#include "tarpro/metrics.hpp"
#include "tarpro/plot.hpp"
#include "tarpro/toy_world.hpp"
#include "tarpro/trainer.hpp"

namespace tarpro {

inline constexpr int kReportVersion = 1;

enum class Method { tarpro, advdm, latent_repel, latent_attract, none };

inline const char* to_string(Method m) {
  switch (m) {
    case Method::tarpro: return "tarpro";
    case Method::advdm: return "advdm";
    case Method::latent_repel: return "latent_repel";
    case Method::latent_attract: return "latent_attract";
    case Method::none: return "none";
  }
  return "none";
}

inline Method parse_method(const std::string& s) {
  for (Method m : {Method::tarpro, Method::advdm, Method::latent_repel, Method::latent_attract, Method::none})
    if (s == to_string(m)) return m;
  throw Error(ErrorKind::InvalidArgument, "unknown method '" + s + "'");
}

inline bool is_pgd_method(Method m) {
  return m == Method::advdm || m == Method::latent_repel || m == Method::latent_attract;
}

/// A config file may carry both a "train" and a "pgd" section so one file
/// drives a whole comparison; each method reads its own section.
struct ExperimentSpec {
  io::fs::path dataset_dir;
  io::fs::path promptset_path;  // default: <dataset_dir>/prompts.json
  io::fs::path editor_path;     // default: <dataset_dir>/editor.tped
  Method method = Method::tarpro;
  TrainConfig train_cfg{};
  PgdConfig pgd_cfg{};
  std::optional<io::fs::path> attract_target;  // unset: uniform mid-gray
  bool attract_target_disabled = false;
  MetricConfig metric_cfg{};
  io::fs::path output_dir;
  Seed seed{};
  std::size_t max_images = 0;  // 0 = all
  std::size_t workers = 1;

  /// Method/config pairing checks.
  void validate() const {
    if (method == Method::latent_attract && attract_target_disabled)
      throw Error(ErrorKind::MethodConfigMismatch, "latent_attract requires an attract target");
    if (std::abs(train_cfg.budget.eta - pgd_cfg.budget.eta) > 1e-9f)
      throw Error(ErrorKind::MethodConfigMismatch, "train and pgd sections must share one budget eta");
    if (method == Method::tarpro) train_cfg.validate();
    if (is_pgd_method(method)) pgd_cfg.validate();
    metric_cfg.validate();
    if (workers == 0) throw Error(ErrorKind::InvalidArgument, "workers must be >= 1");
  }

  /// Seeds of the method configs follow the experiment seed.
  void apply_seed(Seed s) {
    seed = s;
    train_cfg.seed = s;
    pgd_cfg.seed = s;
  }
};

inline nlohmann::json to_json(const ExperimentSpec& s) {
  nlohmann::json j{{"dataset_dir", s.dataset_dir.string()},
                   {"promptset_path", s.promptset_path.string()},
                   {"editor_path", s.editor_path.string()},
                   {"method", to_string(s.method)},
                   {"train", s.train_cfg},
                   {"pgd", s.pgd_cfg},
                   {"metrics", s.metric_cfg},
                   {"output_dir", s.output_dir.string()},
                   {"seed", s.seed.value},
                   {"max_images", s.max_images}};
  j["attract_target"] = s.attract_target_disabled ? nlohmann::json(nullptr)
                        : s.attract_target        ? nlohmann::json(s.attract_target->string())
                                                  : nlohmann::json("gray");
  return j;
}

/// Relative paths resolve against base (the config file's directory).
inline ExperimentSpec spec_from_json(const nlohmann::json& j, const io::fs::path& base = {}) {
  auto path = [&](const std::string& key, const io::fs::path& dflt) -> io::fs::path {
    if (!j.contains(key)) return dflt;
    io::fs::path p = j.at(key).get<std::string>();
    return p.is_relative() && !base.empty() ? base / p : p;
  };
  ExperimentSpec s;
  try {
    s.dataset_dir = path("dataset_dir", base);
    s.promptset_path = path("promptset_path", s.dataset_dir / "prompts.json");
    s.editor_path = path("editor_path", s.dataset_dir / "editor.tped");
    s.output_dir = path("output_dir", "out");
    s.method = parse_method(j.value("method", std::string("tarpro")));
    if (j.contains("train")) s.train_cfg = j.at("train").get<TrainConfig>();
    if (j.contains("pgd")) s.pgd_cfg = j.at("pgd").get<PgdConfig>();
    if (j.contains("metrics")) s.metric_cfg = j.at("metrics").get<MetricConfig>();
    if (j.contains("attract_target")) {
      const auto& t = j.at("attract_target");
      if (t.is_null()) s.attract_target_disabled = true;
      else if (t.get<std::string>() != "gray") s.attract_target = path("attract_target", {});
    }
    s.max_images = j.value("max_images", std::size_t{0});
    s.workers = j.value("workers", std::size_t{1});
    s.apply_seed(Seed{j.value("seed", std::uint64_t{0})});
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::LoadError, std::string("malformed experiment config: ") + e.what());
  }
  return s;
}

inline nlohmann::json read_json_file(const io::fs::path& p) {
  std::ifstream is(p);
  if (!is) throw Error(ErrorKind::LoadError, "cannot open " + p.string());
  try {
    return nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::LoadError, "invalid JSON in " + p.string() + ": " + e.what());
  }
}

inline ExperimentSpec load_spec(const io::fs::path& p) {
  return spec_from_json(read_json_file(p), p.has_parent_path() ? p.parent_path() : io::fs::path("."));
}

// ---------------------------------------------------------------- dataset

struct Dataset {
  std::vector<std::string> ids;
  std::vector<Image> images;
  io::PromptFile prompts;
  world::LoadedWorld world;
};

/// PNGs under <dataset_dir>/images (or dataset_dir itself), sorted by name.
inline Dataset load_dataset(const ExperimentSpec& spec) {
  Dataset d;
  io::fs::path dir = spec.dataset_dir / "images";
  if (!io::fs::is_directory(dir)) dir = spec.dataset_dir;
  if (!io::fs::is_directory(dir)) throw Error(ErrorKind::LoadError, "dataset directory not found: " + dir.string());
  std::vector<io::fs::path> files;
  for (const auto& e : io::fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".png") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  if (spec.max_images && files.size() > spec.max_images) files.resize(spec.max_images);
  if (files.empty()) throw Error(ErrorKind::LoadError, "no PNG images in " + dir.string());
  for (const auto& f : files) {
    d.ids.push_back(f.stem().string());
    Image img = io::load_png(f);
    try {
      validate_image(img);
    } catch (const Error& e) {
      throw Error(ErrorKind::LoadError, f.string() + ": " + e.what());
    }
    d.images.push_back(std::move(img));
  }
  d.prompts = io::load_prompts(spec.promptset_path);
  d.world = world::load_world(spec.editor_path);
  if (d.prompts.eval.empty()) throw Error(ErrorKind::LoadError, "prompt file has no eval split");
  return d;
}

// ---------------------------------------------------------------- report

struct ReportRow {
  std::string method;
  double normal_ssim = 0, normal_psnr_db = 0, nsfw_ratio = 0, malicious_ssim = 0, malicious_psnr_db = 0,
         perturb_ssim = 0, perturb_psnr_db = 0;

  static const std::vector<std::string>& columns() {
    static const std::vector<std::string> c{"normal_ssim",       "normal_psnr_db", "nsfw_ratio",     "malicious_ssim",
                                            "malicious_psnr_db", "perturb_ssim",   "perturb_psnr_db"};
    return c;
  }
  std::vector<double> values() const {
    return {normal_ssim, normal_psnr_db, nsfw_ratio, malicious_ssim, malicious_psnr_db, perturb_ssim, perturb_psnr_db};
  }
  void set_values(const std::vector<double>& v) {
    normal_ssim = v.at(0);
    normal_psnr_db = v.at(1);
    nsfw_ratio = v.at(2);
    malicious_ssim = v.at(3);
    malicious_psnr_db = v.at(4);
    perturb_ssim = v.at(5);
    perturb_psnr_db = v.at(6);
  }
};

struct ImageResult {
  std::string image_id;
  ReportRow row;  // per-image means; nsfw_ratio over this image's malicious edits
};

struct EvalReport {
  std::vector<ReportRow> rows;
  std::vector<ImageResult> per_image;
  nlohmann::json metadata = nlohmann::json::object();

  std::string toy_world_version() const { return metadata.value("toy_world_version", std::string()); }
};

inline std::string csv_header() {
  std::string h = "method";
  for (const auto& c : ReportRow::columns()) h += "," + c;
  return h;
}

/// Six decimals for SSIM/ratio columns, four for dB columns.
inline std::string format_row(const ReportRow& r) {
  const auto v = r.values();
  std::string s = r.method;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const bool db = ReportRow::columns()[i].find("psnr") != std::string::npos;
    s += "," + plot::format_fixed(v[i], db ? 4 : 6);
  }
  return s;
}

inline std::string report_csv(const EvalReport& r) {
  std::string s = csv_header() + "\n";
  for (const auto& row : r.rows) s += format_row(row) + "\n";
  return s;
}

inline nlohmann::json row_to_json(const ReportRow& r) {
  nlohmann::json j{{"method", r.method}};
  const auto v = r.values();
  for (std::size_t i = 0; i < v.size(); ++i) j[ReportRow::columns()[i]] = v[i];
  return j;
}
inline ReportRow row_from_json(const nlohmann::json& j) {
  ReportRow r;
  r.method = j.at("method").get<std::string>();
  std::vector<double> v;
  for (const auto& c : ReportRow::columns()) v.push_back(j.at(c).get<double>());
  r.set_values(v);
  return r;
}

inline nlohmann::json report_to_json(const EvalReport& r) {
  nlohmann::json j{{"report_version", kReportVersion}, {"metadata", r.metadata}};
  j["rows"] = nlohmann::json::array();
  for (const auto& row : r.rows) j["rows"].push_back(row_to_json(row));
  j["per_image"] = nlohmann::json::array();
  for (const auto& pi : r.per_image) {
    auto e = row_to_json(pi.row);
    e["image_id"] = pi.image_id;
    j["per_image"].push_back(std::move(e));
  }
  return j;
}

inline EvalReport report_from_json(const nlohmann::json& j) {
  if (j.value("report_version", 0) != kReportVersion)
    throw Error(ErrorKind::VersionMismatch, "unsupported report version");
  EvalReport r;
  try {
    r.metadata = j.at("metadata");
    for (const auto& row : j.at("rows")) r.rows.push_back(row_from_json(row));
    if (j.contains("per_image"))
      for (const auto& e : j.at("per_image")) r.per_image.push_back({e.at("image_id").get<std::string>(), row_from_json(e)});
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::LoadError, std::string("malformed report: ") + e.what());
  }
  return r;
}

inline void write_text(const io::fs::path& p, const std::string& s) {
  std::ofstream os(p, std::ios::binary);
  if (!os) throw Error(ErrorKind::WriteError, "cannot write " + p.string());
  os << s;
  if (!os) throw Error(ErrorKind::WriteError, "failed writing " + p.string());
}

inline void save_report(const EvalReport& r, const io::fs::path& dir) {
  std::error_code ec;
  io::fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorKind::WriteError, "cannot create " + dir.string());
  write_text(dir / "report.json", report_to_json(r).dump(2) + "\n");
  write_text(dir / "report.csv", report_csv(r));
}

inline EvalReport load_report(const io::fs::path& p) { return report_from_json(read_json_file(p)); }

// ---------------------------------------------------------------- experiment

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

/// Protected version of one image under the spec's method.
inline Image protect_with(const ExperimentSpec& spec, const Dataset& d, std::size_t i) {
  const Image& x = d.images[i];
  const auto& editor = d.world.editor;
  switch (spec.method) {
    case Method::none: return x;
    case Method::tarpro: {
      auto res = train<float>(std::vector<TrainSample>{{d.ids[i], x}}, d.prompts.train, editor, spec.train_cfg);
      return protect(x, res.params, spec.train_cfg.budget);
    }
    case Method::advdm: return advdm_protect(x, editor, spec.pgd_cfg);
    case Method::latent_repel: return latent_distance_protect(x, editor, spec.pgd_cfg, LatentMode::repel);
    case Method::latent_attract: {
      Image t = spec.attract_target ? io::load_png(*spec.attract_target) : gray_target(x.shape());
      return latent_distance_protect(x, editor, spec.pgd_cfg, LatentMode::attract, t);
    }
  }
  return x;
}

/// Metric pairs for one image given its protected version.
inline ImageResult evaluate_image(const ExperimentSpec& spec, const Dataset& d, std::size_t i, const Image& xp) {
  const Image& x = d.images[i];
  const auto& editor = d.world.editor;
  const auto& m = spec.metric_cfg;
  const EditorConfig ecfg = spec.train_cfg.editor_config();
  const PromptSet& ev = d.prompts.eval;
  ImageResult out;
  out.image_id = d.ids[i];
  ReportRow& r = out.row;
  r.method = to_string(spec.method);
  std::map<std::string, Image> originals;
  for (const auto& p : ev.normals) {
    Image ref = editor.edit(x, p, ecfg);
    Image got = editor.edit(xp, p, ecfg);
    r.normal_ssim += ssim(got, ref, m);
    r.normal_psnr_db += psnr(got, ref, m);
    originals.emplace(p.id, std::move(ref));
  }
  std::vector<double> scores;
  for (const auto& p : ev.maliciouses) {
    const Image& ref = originals.at(*p.parent_id);
    Image got = editor.edit(xp, p, ecfg);
    r.malicious_ssim += ssim(got, ref, m);
    r.malicious_psnr_db += psnr(got, ref, m);
    scores.push_back(static_cast<double>(d.world.scorer.score(got)));
  }
  const double nn = static_cast<double>(std::max<std::size_t>(1, ev.normals.size()));
  const double nm = static_cast<double>(std::max<std::size_t>(1, ev.maliciouses.size()));
  r.normal_ssim /= nn;
  r.normal_psnr_db /= nn;
  r.malicious_ssim /= nm;
  r.malicious_psnr_db /= nm;
  r.nsfw_ratio = scores.empty() ? 0.0 : nsfw_ratio(scores, m);
  r.perturb_ssim = ssim(xp, x, m);
  r.perturb_psnr_db = psnr(xp, x, m);
  return out;
}

/// Runs one method over the dataset. Images may be processed by several
/// workers; aggregation always follows image-id order.
inline EvalReport run_experiment(const ExperimentSpec& spec, const Dataset& d) {
  spec.validate();
  std::vector<ImageResult> results(d.images.size());
  std::vector<std::string> errors(d.images.size());
  auto work = [&](std::size_t i) {
    try {
      results[i] = evaluate_image(spec, d, i, protect_with(spec, d, i));
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  };
  const std::size_t nw = std::min(spec.workers, d.images.size());
  if (nw <= 1) {
    for (std::size_t i = 0; i < d.images.size(); ++i) {
      work(i);
      if (!errors[i].empty()) break;
    }
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < nw; ++w)
      pool.emplace_back([&, w] {
        for (std::size_t i = w; i < d.images.size(); i += nw) work(i);
      });
    for (auto& t : pool) t.join();
  }
  for (std::size_t i = 0; i < errors.size(); ++i) {
    if (errors[i].empty()) continue;
    // Re-raise with the original kind where it is recoverable from the message prefix.
    for (int k = 0; k <= static_cast<int>(ErrorKind::InvalidArgument); ++k) {
      const auto kind = static_cast<ErrorKind>(k);
      const std::string pre = std::string(to_string(kind)) + ": ";
      if (errors[i].rfind(pre, 0) == 0) throw Error(kind, "image " + d.ids[i] + ": " + errors[i].substr(pre.size()));
    }
    throw Error(ErrorKind::InvalidArgument, "image " + d.ids[i] + ": " + errors[i]);
  }

  EvalReport rep;
  ReportRow agg;
  agg.method = to_string(spec.method);
  std::vector<double> sums(ReportRow::columns().size(), 0.0);
  for (const auto& r : results) {
    const auto v = r.row.values();
    for (std::size_t k = 0; k < v.size(); ++k) sums[k] += v[k];
  }
  for (auto& s : sums) s /= static_cast<double>(results.size());
  agg.set_values(sums);
  rep.rows.push_back(agg);
  rep.per_image = std::move(results);

  auto& md = rep.metadata;
  md["toy_world_version"] = world::kToyWorldVersion;
  md["editor_checksum"] = hex64(d.world.checksum);
  md["seed"] = spec.seed.value;
  md["method"] = to_string(spec.method);
  md["images"] = d.ids;
  md["eval_prompts"] = {{"normal", d.prompts.eval.N()}, {"malicious", d.prompts.eval.I()}};
  md["train_prompts"] = {{"normal", d.prompts.train.N()}, {"malicious", d.prompts.train.I()}};
  md["metrics"] = spec.metric_cfg;
  md["sampler_steps"] = spec.train_cfg.sampler_steps;
  if (spec.method == Method::tarpro) md["train"] = spec.train_cfg;
  if (is_pgd_method(spec.method)) md["pgd"] = spec.pgd_cfg;
  if (spec.method == Method::latent_attract)
    md["attract_target"] = spec.attract_target ? spec.attract_target->filename().string() : "gray";
  md["pairing"] = {{"normal", "edit(protect(x), y_nor) vs edit(x, y_nor)"},
                   {"malicious", "edit(protect(x), y_mal) vs edit(x, parent(y_mal))"},
                   {"perturbation", "protect(x) vs x"}};
  return rep;
}

inline EvalReport run_experiment(const ExperimentSpec& spec) {
  spec.validate();
  return run_experiment(spec, load_dataset(spec));
}

// ---------------------------------------------------------------- comparison

struct ComparisonTable {
  std::vector<ReportRow> rows;
  std::vector<std::vector<double>> deltas;  // vs the "none" row; empty when there is none
  std::vector<std::size_t> best;            // row index of the best value per column
  std::vector<bool> higher_is_better;

  std::string to_csv() const {
    std::string s = csv_header() + ",best_columns";
    if (!deltas.empty())
      for (const auto& c : ReportRow::columns()) s += ",delta_" + c;
    s += "\n";
    for (std::size_t i = 0; i < rows.size(); ++i) {
      s += format_row(rows[i]) + ",";
      std::string marks;
      for (std::size_t c = 0; c < best.size(); ++c)
        if (best[c] == i) marks += (marks.empty() ? "" : ";") + ReportRow::columns()[c];
      s += marks;
      if (!deltas.empty())
        for (double v : deltas[i]) s += "," + plot::format_fixed(v, 6);
      s += "\n";
    }
    return s;
  }

  /// Table-1-style text rendering with arrows and a '*' on best values.
  std::string to_markdown() const {
    std::string s = "| method |";
    for (std::size_t c = 0; c < ReportRow::columns().size(); ++c)
      s += " " + ReportRow::columns()[c] + (higher_is_better[c] ? " ↑" : " ↓") + " |";
    s += "\n|---|";
    for (std::size_t c = 0; c < ReportRow::columns().size(); ++c) s += "---|";
    s += "\n";
    for (std::size_t i = 0; i < rows.size(); ++i) {
      s += "| " + rows[i].method + " |";
      const auto v = rows[i].values();
      for (std::size_t c = 0; c < v.size(); ++c) {
        s += " " + plot::format_fixed(v[c], ReportRow::columns()[c].find("psnr") != std::string::npos ? 2 : 4);
        if (best[c] == i && rows.size() > 1) s += "*";
        if (!deltas.empty() && rows[i].method != "none")
          s += " (" + std::string(deltas[i][c] >= 0 ? "+" : "") + plot::format_fixed(deltas[i][c], 4) + ")";
        s += " |";
      }
      s += "\n";
    }
    return s;
  }
};

/// Merges reports from one toy world. Best marking ignores the "none" row;
/// ties keep the earliest row.
inline ComparisonTable compare_reports(const std::vector<EvalReport>& reports) {
  if (reports.empty()) throw Error(ErrorKind::EmptyInput, "compare_reports needs at least one report");
  const std::string version = reports.front().toy_world_version();
  const std::string checksum = reports.front().metadata.value("editor_checksum", std::string());
  ComparisonTable t;
  for (const auto& r : reports) {
    if (r.toy_world_version() != version || r.metadata.value("editor_checksum", std::string()) != checksum)
      throw Error(ErrorKind::VersionMismatch, "reports come from different toy worlds");
    t.rows.insert(t.rows.end(), r.rows.begin(), r.rows.end());
  }
  const auto& cols = ReportRow::columns();
  for (const auto& c : cols) t.higher_is_better.push_back(c != "nsfw_ratio");
  const auto none_it = std::find_if(t.rows.begin(), t.rows.end(), [](const ReportRow& r) { return r.method == "none"; });
  const bool single = reports.size() == 1 && t.rows.size() == 1;
  t.best.assign(cols.size(), 0);
  for (std::size_t c = 0; c < cols.size(); ++c) {
    std::optional<std::size_t> b;
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
      if (t.rows[i].method == "none" && t.rows.size() > 1) continue;
      const double v = t.rows[i].values()[c];
      if (!b) b = i;
      else {
        const double bv = t.rows[*b].values()[c];
        if (t.higher_is_better[c] ? v > bv : v < bv) b = i;
      }
    }
    t.best[c] = b.value_or(0);
  }
  if (none_it != t.rows.end() && !single) {
    const auto base = none_it->values();
    for (const auto& r : t.rows) {
      const auto v = r.values();
      std::vector<double> d(v.size());
      for (std::size_t k = 0; k < v.size(); ++k) d[k] = v[k] - base[k];
      t.deltas.push_back(std::move(d));
    }
  }
  return t;
}

// ---------------------------------------------------------------- plots

inline constexpr const char* kPerturbPlot = "perturb_quality.png";
inline constexpr const char* kNsfwPlot = "nsfw_ratio.png";

/// perturb_quality.png (SSIM and PSNR panels) and nsfw_ratio.png, one bar per method.
inline std::vector<io::fs::path> emit_plots(const std::vector<EvalReport>& reports, const io::fs::path& dir,
                                            const MetricConfig& mcfg = {}) {
  std::vector<ReportRow> rows;
  for (const auto& r : reports) rows.insert(rows.end(), r.rows.begin(), r.rows.end());
  if (rows.empty()) throw Error(ErrorKind::EmptyInput, "emit_plots needs at least one report row");
  std::error_code ec;
  io::fs::create_directories(dir, ec);
  if (ec || !io::fs::is_directory(dir)) throw Error(ErrorKind::WriteError, "cannot create " + dir.string());
  plot::Panel ps{"perturbation SSIM", 1.0, {}, 3}, pp{"perturbation PSNR (dB)", mcfg.psnr_cap_db, {}, 1},
      pn{"NSFW ratio", 1.0, {}, 3};
  double psnr_max = 0.0;
  for (const auto& r : rows) {
    ps.bars.push_back({r.method, r.perturb_ssim});
    pp.bars.push_back({r.method, r.perturb_psnr_db});
    pn.bars.push_back({r.method, r.nsfw_ratio});
    psnr_max = std::max(psnr_max, r.perturb_psnr_db);
  }
  pp.y_max = std::max(10.0, 10.0 * std::ceil(psnr_max / 10.0));
  const io::fs::path a = dir / kPerturbPlot, b = dir / kNsfwPlot;
  plot::bar_chart({ps, pp}).save(a);
  plot::bar_chart({pn}).save(b);
  return {a, b};
}

// ---------------------------------------------------------------- benchmark assets

/// Writes editor.tped, prompts.json, images/*.png and world.json under dir.
inline void write_benchmark(const io::fs::path& dir, const world::WorldConfig& wc, const world::BenchmarkSizes& sz,
                            Seed seed) {
  std::error_code ec;
  io::fs::create_directories(dir / "images", ec);
  if (ec) throw Error(ErrorKind::WriteError, "cannot create " + dir.string());
  const auto w = world::build_toy_world(wc, seed);
  w.save(dir / "editor.tped");
  io::save_prompts(dir / "prompts.json", world::make_prompts(w, sz, seed));
  const auto imgs = world::make_benchmark_images(w, sz, seed);
  for (std::size_t i = 0; i < imgs.size(); ++i)
    io::save_png(dir / "images" / (world::numbered("img_", i) + ".png"), imgs[i]);
  nlohmann::json info{{"toy_world_version", world::kToyWorldVersion},
                      {"seed", seed.value},
                      {"reconstruction_mse", w.reconstruction_mse},
                      {"scorer_accuracy", w.scorer_accuracy},
                      {"malicious_strength", w.malicious_strength},
                      {"images", imgs.size()},
                      {"latent_channels", wc.latent_channels},
                      {"sampler_steps", wc.sampler_steps}};
  write_text(dir / "world.json", info.dump(2) + "\n");
}

}  // namespace tarpro

#endif  // TARPRO_HARNESS_HPP
