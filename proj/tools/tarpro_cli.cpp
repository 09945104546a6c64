// tarpro: command-line front end.
//
//   tarpro pretrain-editor --config world.json --seed 0 --out data/toy_benchmark
//   tarpro train     --config exp.json --image img_000 --out run/
//   tarpro protect   --config exp.json --generator run/generator.tpgn --image img_000 --out protected.png
//   tarpro edit      --config exp.json --image protected.png --prompt eval_mal_000 --out edited.png
//   tarpro evaluate  --config exp.json --method tarpro
//   tarpro compare   --config cmp.json        (or --reports a.json b.json --out dir)
//   tarpro plot      --config cmp.json        (or --reports a.json b.json --out dir)

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "tarpro/tarpro.hpp"

namespace {

using namespace tarpro;
using nlohmann::json;

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* cmd, Common& c, bool config_required) {
  auto* o = cmd->add_option("--config", c.config, "JSON config file");
  if (config_required) o->required();
  cmd->add_option("--seed", c.seed, "seed overriding the config");
}

ExperimentSpec spec_for(const Common& c) {
  ExperimentSpec s = c.config.empty() ? spec_from_json(json::object(), ".") : load_spec(c.config);
  if (c.seed) s.apply_seed(Seed{*c.seed});
  return s;
}

/// Accepts a PNG path or the id of an image in the spec's dataset.
Image resolve_image(const ExperimentSpec& s, const std::string& ref, std::string* id = nullptr) {
  io::fs::path p = ref;
  if (!io::fs::exists(p)) {
    for (const auto& cand : {s.dataset_dir / "images" / (ref + ".png"), s.dataset_dir / (ref + ".png")})
      if (io::fs::exists(cand)) p = cand;
  }
  if (!io::fs::exists(p)) throw Error(ErrorKind::LoadError, "image not found: " + ref);
  if (id) *id = p.stem().string();
  return validate_image(io::load_png(p));
}

const Prompt& find_prompt(const io::PromptFile& pf, const std::string& id) {
  for (const auto* set : {&pf.train, &pf.eval})
    for (const auto* list : {&set->normals, &set->maliciouses})
      for (const auto& p : *list)
        if (p.id == id) return p;
  throw Error(ErrorKind::LoadError, "prompt not found: " + id);
}

std::vector<EvalReport> load_reports(const Common& c, std::vector<std::string> paths, std::string& out_dir) {
  if (!c.config.empty()) {
    const json j = read_json_file(c.config);
    const io::fs::path base = io::fs::path(c.config).parent_path();
    if (paths.empty())
      for (const auto& p : j.value("reports", std::vector<std::string>{}))
        paths.push_back(io::fs::path(p).is_relative() ? (base / p).string() : p);
    if (out_dir.empty() && j.contains("output_dir")) {
      io::fs::path o = j.at("output_dir").get<std::string>();
      out_dir = (o.is_relative() ? base / o : o).string();
    }
  }
  if (paths.empty()) throw Error(ErrorKind::EmptyInput, "no reports given");
  if (out_dir.empty()) out_dir = ".";
  std::vector<EvalReport> reps;
  for (const auto& p : paths) reps.push_back(load_report(p));
  return reps;
}

int run(int argc, char** argv) {
  CLI::App app{"Targeted protection against malicious image edits (toy scale)"};
  app.require_subcommand(1);

  Common c_pre, c_train, c_prot, c_edit, c_eval, c_cmp, c_plot;

  auto* pre = app.add_subcommand("pretrain-editor", "build the toy world and write the benchmark assets");
  add_common(pre, c_pre, false);
  std::string pre_out = "data/toy_benchmark";
  pre->add_option("--out", pre_out, "output directory");

  auto* tr = app.add_subcommand("train", "train a perturbation generator for one image");
  add_common(tr, c_train, true);
  std::string tr_image, tr_out;
  tr->add_option("--image", tr_image, "image path or dataset id (default: first dataset image)");
  tr->add_option("--out", tr_out, "output directory (default: config output_dir)");

  auto* pr = app.add_subcommand("protect", "add a trained generator's perturbation to an image");
  add_common(pr, c_prot, true);
  std::string pr_gen, pr_image, pr_out;
  pr->add_option("--generator", pr_gen, "generator checkpoint (.tpgn)")->required();
  pr->add_option("--image", pr_image, "image path or dataset id")->required();
  pr->add_option("--out", pr_out, "output PNG")->required();

  auto* ed = app.add_subcommand("edit", "edit an image with one prompt and report its NSFW score");
  add_common(ed, c_edit, true);
  std::string ed_image, ed_prompt, ed_out;
  ed->add_option("--image", ed_image, "image path or dataset id")->required();
  ed->add_option("--prompt", ed_prompt, "prompt id")->required();
  ed->add_option("--out", ed_out, "output PNG")->required();

  auto* ev = app.add_subcommand("evaluate", "run one method over the benchmark and write report.json/csv");
  add_common(ev, c_eval, true);
  std::string ev_method, ev_out;
  ev->add_option("--method", ev_method, "tarpro | advdm | latent_repel | latent_attract | none");
  ev->add_option("--out", ev_out, "output directory (default: config output_dir)");

  auto* cmp = app.add_subcommand("compare", "merge reports into a comparison table");
  add_common(cmp, c_cmp, false);
  std::vector<std::string> cmp_reports;
  std::string cmp_out;
  cmp->add_option("--reports", cmp_reports, "report.json files");
  cmp->add_option("--out", cmp_out, "output directory");

  auto* pl = app.add_subcommand("plot", "write perturb_quality.png and nsfw_ratio.png");
  add_common(pl, c_plot, false);
  std::vector<std::string> pl_reports;
  std::string pl_out;
  pl->add_option("--reports", pl_reports, "report.json files");
  pl->add_option("--out", pl_out, "output directory");

  CLI11_PARSE(app, argc, argv);

  if (*pre) {
    json j = c_pre.config.empty() ? json::object() : read_json_file(c_pre.config);
    world::WorldConfig wc = j.value("world", world::WorldConfig{});
    world::BenchmarkSizes sz;
    if (j.contains("benchmark")) {
      const auto& b = j["benchmark"];
      sz.images = b.value("images", sz.images);
      sz.train_normals = b.value("train_normals", sz.train_normals);
      sz.train_malicious_per_normal = b.value("train_malicious_per_normal", sz.train_malicious_per_normal);
      sz.eval_normals = b.value("eval_normals", sz.eval_normals);
      sz.eval_malicious = b.value("eval_malicious", sz.eval_malicious);
    }
    const Seed seed{c_pre.seed.value_or(j.value("seed", std::uint64_t{0}))};
    write_benchmark(pre_out, wc, sz, seed);
    std::cout << read_json_file(io::fs::path(pre_out) / "world.json").dump(2) << "\n";
    return 0;
  }

  if (*tr) {
    const ExperimentSpec s = spec_for(c_train);
    const auto d = load_dataset(s);
    std::string id = d.ids.front();
    Image img = tr_image.empty() ? d.images.front() : resolve_image(s, tr_image, &id);
    auto res = train<float>(std::vector<TrainSample>{{id, img}}, d.prompts.train, d.world.editor, s.train_cfg);
    const io::fs::path out = tr_out.empty() ? s.output_dir : io::fs::path(tr_out);
    io::fs::create_directories(out);
    res.params.save(out / "generator.tpgn");
    res.history.write_csv(out / "history.csv");
    if (!res.history.empty())
      std::cout << "trained " << res.history.size() << " steps, total loss " << res.history.records.front().total
                << " -> " << res.history.records.back().total << "\n";
    std::cout << "wrote " << (out / "generator.tpgn").string() << "\n";
    return 0;
  }

  if (*pr) {
    const ExperimentSpec s = spec_for(c_prot);
    const auto params = GeneratorParams<float>::load(pr_gen);
    const Image x = resolve_image(s, pr_image);
    const Image xp = protect(x, params, s.train_cfg.budget);
    io::save_png(pr_out, xp);
    std::cout << "ssim " << ssim(xp, x, s.metric_cfg) << " psnr_db " << psnr(xp, x, s.metric_cfg) << "\n";
    return 0;
  }

  if (*ed) {
    const ExperimentSpec s = spec_for(c_edit);
    const auto w = world::load_world(s.editor_path);
    const auto pf = io::load_prompts(s.promptset_path);
    const Image out = w.editor.edit(resolve_image(s, ed_image), find_prompt(pf, ed_prompt), s.train_cfg.editor_config());
    io::save_png(ed_out, out);
    const float score = w.scorer.score(out);
    std::cout << "nsfw_score " << score << (w.scorer.flagged(score) ? " flagged" : " clean") << "\n";
    return 0;
  }

  if (*ev) {
    ExperimentSpec s = spec_for(c_eval);
    if (!ev_method.empty()) s.method = parse_method(ev_method);
    if (!ev_out.empty()) s.output_dir = ev_out;
    const auto rep = run_experiment(s);
    save_report(rep, s.output_dir);
    std::cout << report_csv(rep);
    return 0;
  }

  if (*cmp) {
    const auto reps = load_reports(c_cmp, cmp_reports, cmp_out);
    const auto table = compare_reports(reps);
    io::fs::create_directories(cmp_out);
    write_text(io::fs::path(cmp_out) / "comparison.csv", table.to_csv());
    write_text(io::fs::path(cmp_out) / "comparison.md", table.to_markdown());
    std::cout << table.to_markdown();
    return 0;
  }

  if (*pl) {
    const auto reps = load_reports(c_plot, pl_reports, pl_out);
    for (const auto& p : emit_plots(reps, pl_out)) std::cout << "wrote " << p.string() << "\n";
    return 0;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const tarpro::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
