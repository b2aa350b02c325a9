// Command-line front end: fit, impute, score, types, patterns, synth,
// eval-synth and report.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "abda/abda.hpp"

namespace fs = std::filesystem;
using namespace abda;

namespace {

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path);
  return out;
}

std::string provenance(const std::string& command, std::uint64_t seed, std::uint64_t cfg, std::uint64_t data) {
  return "# abda " + std::string(kToolVersion) + " command=" + command + " seed=" + std::to_string(seed) +
         " config=" + hex64(cfg) + " data=" + hex64(data);
}

std::string provenance(const std::string& command, const Model& m) {
  return provenance(command, m.seed, config_hash(m), m.dataset_hash);
}

// Draws a seed when none was given and reports it.
std::uint64_t resolve_seed(const CLI::Option* opt, std::uint64_t seed) {
  if (opt->count() > 0) return seed;
  std::random_device rd;
  const std::uint64_t s = (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
  std::cout << "seed: " << s << '\n';
  return s;
}

void check_schema(const Model& m, const Dataset& data) {
  if (data.names() != m.feature_names || data.meta_types() != m.meta) {
    throw Error(ErrorCode::InvalidData, "data columns do not match the model's features");
  }
  if (dataset_hash(data) != m.dataset_hash) std::cerr << "note: data differs from the training data\n";
}

std::vector<double> parse_list(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    double v = 0.0;
    if (!detail::parse_number(detail::trim(item), v)) throw Error(ErrorCode::InvalidArgument, "bad number list: " + s);
    out.push_back(v);
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bayesian density estimation with sum-product networks"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);
  app.failure_message([](const CLI::App*, const CLI::Error& e) { return "error: Usage: " + std::string(e.what()) + "\n"; });

  // fit
  auto* fit_cmd = app.add_subcommand("fit", "learn a structure and run the Gibbs sampler");
  std::string fit_data;
  std::string fit_out;
  std::string fit_trace;
  FitOptions fo;
  std::uint64_t fit_seed = 0;
  fit_cmd->add_option("data", fit_data, "training CSV")->required()->check(CLI::ExistingFile);
  fit_cmd->add_option("-o,--output", fit_out, "model file")->required();
  fit_cmd->add_option("--rdc-threshold", fo.structure.rdc_threshold, "RDC independence threshold")
      ->capture_default_str();
  fit_cmd->add_option("--min-instances", fo.structure.min_instances_fraction, "minimum slice size as a fraction of N")
      ->capture_default_str();
  fit_cmd->add_option("--iters", fo.gibbs.iterations, "Gibbs iterations")->capture_default_str();
  fit_cmd->add_option("--burn-in", fo.gibbs.burn_in, "discarded iterations")->capture_default_str();
  fit_cmd->add_option("--thinning", fo.gibbs.thinning, "keep every k-th draw")->capture_default_str();
  fit_cmd->add_option("--gamma", fo.gibbs.gamma, "sum-weight Dirichlet concentration")->capture_default_str();
  fit_cmd->add_option("--alpha", fo.gibbs.alpha, "leaf-weight Dirichlet concentration")->capture_default_str();
  fit_cmd->add_option("--threads", fo.gibbs.threads, "row-sampling threads (1 is bitwise reproducible)")
      ->capture_default_str();
  auto* fit_seed_opt = fit_cmd->add_option("--seed", fit_seed, "random seed (drawn and printed when omitted)");
  fit_cmd->add_option("--trace", fit_trace, "write the per-iteration log-likelihood trace CSV");

  // impute
  auto* imp_cmd = app.add_subcommand("impute", "fill missing cells");
  std::string imp_model, imp_data, imp_out, imp_mode = "map";
  imp_cmd->add_option("model", imp_model)->required()->check(CLI::ExistingFile);
  imp_cmd->add_option("data", imp_data)->required()->check(CLI::ExistingFile);
  imp_cmd->add_option("-o,--output", imp_out)->required();
  imp_cmd->add_option("--mode", imp_mode, "map: decode with the best draw; mc: combine decodes over draws")
      ->check(CLI::IsMember({"map", "mc"}))
      ->capture_default_str();

  // score
  auto* score_cmd = app.add_subcommand("score", "negative log-likelihood per row");
  std::string sc_model, sc_data, sc_out;
  score_cmd->add_option("model", sc_model)->required()->check(CLI::ExistingFile);
  score_cmd->add_option("data", sc_data)->required()->check(CLI::ExistingFile);
  score_cmd->add_option("-o,--output", sc_out)->required();

  // types
  auto* types_cmd = app.add_subcommand("types", "likelihood and statistical type posteriors");
  std::string ty_model, ty_out;
  types_cmd->add_option("model", ty_model)->required()->check(CLI::ExistingFile);
  types_cmd->add_option("-o,--output", ty_out)->required();

  // patterns
  auto* pat_cmd = app.add_subcommand("patterns", "mine conjunctions of interval events");
  std::string pa_model, pa_out;
  MiningConfig mc;
  pat_cmd->add_option("model", pa_model)->required()->check(CLI::ExistingFile);
  pat_cmd->add_option("-o,--output", pa_out)->required();
  pat_cmd->add_option("--lambda", mc.lambda, "central interval mass")->capture_default_str();
  pat_cmd->add_option("--theta", mc.theta, "minimum leaf mass of an atom")->capture_default_str();
  pat_cmd->add_option("--support-floor", mc.support_floor, "minimum support")->capture_default_str();
  pat_cmd->add_option("--max-arity", mc.max_arity, "largest conjunction")->capture_default_str();
  pat_cmd->add_option("--weight-floor", mc.weight_floor, "minimum component weight")->capture_default_str();

  // synth
  auto* syn_cmd = app.add_subcommand("synth", "generate a synthetic dataset with ground truth");
  SynthConfig syc;
  std::string syn_dir;
  std::string syn_fracs = "0.7,0.1,0.2";
  syn_cmd->add_option("--n", syc.rows, "rows")->capture_default_str();
  syn_cmd->add_option("--d", syc.features, "features")->capture_default_str();
  auto* syn_seed_opt = syn_cmd->add_option("--seed", syc.seed, "random seed (drawn and printed when omitted)");
  syn_cmd->add_option("--split", syn_fracs, "train,valid,test fractions")->capture_default_str();
  syn_cmd->add_option("-o,--output", syn_dir, "output directory")->required();

  // eval-synth
  auto* ev_cmd = app.add_subcommand("eval-synth", "fit synthetic datasets and compare with their ground truth");
  std::vector<std::string> ev_dirs;
  std::string ev_out, ev_csv, ev_grid = "0.1,0.3,0.5";
  FitOptions ev_fo;
  ev_fo.gibbs.iterations = 1500;
  ev_fo.gibbs.burn_in = 1000;
  std::uint64_t ev_seed = 0;
  ev_cmd->add_option("dirs", ev_dirs, "directories written by synth")->required()->check(CLI::ExistingDirectory);
  ev_cmd->add_option("-o,--output", ev_out, "markdown summary");
  ev_cmd->add_option("--csv", ev_csv, "per-feature results");
  ev_cmd->add_option("--rdc-grid", ev_grid, "RDC thresholds tried; best validation likelihood wins")
      ->capture_default_str();
  ev_cmd->add_option("--min-instances", ev_fo.structure.min_instances_fraction)->capture_default_str();
  ev_cmd->add_option("--iters", ev_fo.gibbs.iterations)->capture_default_str();
  ev_cmd->add_option("--burn-in", ev_fo.gibbs.burn_in)->capture_default_str();
  auto* ev_seed_opt = ev_cmd->add_option("--seed", ev_seed, "random seed (drawn and printed when omitted)");

  // report
  auto* rep_cmd = app.add_subcommand("report", "markdown report with density grids");
  std::string rp_model, rp_data, rp_out;
  std::size_t rp_points = 200;
  rep_cmd->add_option("model", rp_model)->required()->check(CLI::ExistingFile);
  rep_cmd->add_option("data", rp_data)->required()->check(CLI::ExistingFile);
  rep_cmd->add_option("-o,--output", rp_out, "report.md; densities go to <stem>_densities.csv")->required();
  rep_cmd->add_option("--points", rp_points, "grid points per continuous feature")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*fit_cmd) {
      const std::uint64_t seed = resolve_seed(fit_seed_opt, fit_seed);
      fo.structure.seed = mix_seed(seed, 0);
      fo.gibbs.seed = mix_seed(seed, 1);
      const Dataset data = load_csv(fit_data);
      Model m = fit(data, fo);
      m.seed = seed;
      save_model(fit_out, m);
      if (!fit_trace.empty()) {
        auto out = open_out(fit_trace);
        out << "iteration,mean_loglik\n";
        for (std::size_t i = 0; i < m.trace.size(); ++i) out << i << ',' << format_double(m.trace[i]) << '\n';
        out << provenance("fit", seed, config_hash(m), m.dataset_hash) << '\n';
      }
      std::printf("fit: %zu rows, %zu nodes, %zu draws, train loglik %.4f, sparsity %.3f\n", data.rows(), m.spn.size(),
                  m.draws.size(), m.trace.empty() ? 0.0 : m.trace.back(), m.sparsity);
    } else if (*imp_cmd) {
      const Model m = load_model(imp_model);
      Dataset data = load_csv(imp_data);
      check_schema(m, data);
      Dataset out = impute_dataset(m, data, imp_mode == "mc" ? ImputeMode::McAverage : ImputeMode::MapSample);
      out.provenance.push_back(provenance("impute --mode " + imp_mode, m));
      save_csv(imp_out, out);
      std::printf("impute: %zu rows, %zu cells filled\n", data.rows(), data.missing_count());
    } else if (*score_cmd) {
      const Model m = load_model(sc_model);
      const Dataset data = load_csv(sc_data);
      check_schema(m, data);
      auto scores = anomaly_scores(m, data);
      std::vector<std::size_t> rank(scores.size());
      for (std::size_t r = 0; r < scores.size(); ++r) rank[scores[r].row] = r + 1;
      std::sort(scores.begin(), scores.end(), [](const AnomalyScore& a, const AnomalyScore& b) { return a.row < b.row; });
      auto out = open_out(sc_out);
      out << "row,nll,rank,path\n";
      for (const auto& s : scores) {
        out << s.row << ',' << format_double(s.score) << ',' << rank[s.row] << ',';
        for (std::size_t i = 0; i < s.path.size(); ++i) {
          out << (i ? ">" : "") << 'n' << s.path[i].first << ':' << s.path[i].second;
        }
        out << '\n';
      }
      out << provenance("score", m) << '\n';
      std::printf("score: %zu rows\n", scores.size());
    } else if (*types_cmd) {
      const Model m = load_model(ty_model);
      auto out = open_out(ty_out);
      write_types_csv(out, m);
      out << provenance("types", m) << '\n';
    } else if (*pat_cmd) {
      const Model m = load_model(pa_model);
      const auto atoms = extract_atoms(m, mc.lambda, mc.weight_floor);
      const auto pats = mine(m, atoms, mc);
      auto out = open_out(pa_out);
      write_patterns_csv(out, pats, atoms, m.feature_names);
      out << provenance("patterns", m) << '\n';
      std::printf("patterns: %zu atoms, %zu patterns\n", atoms.size(), pats.size());
      for (std::size_t i = 0; i < pats.size() && i < 5; ++i) {
        std::printf("  %s\n", format_pattern(pats[i], atoms, m.feature_names).c_str());
      }
    } else if (*syn_cmd) {
      syc.seed = resolve_seed(syn_seed_opt, syc.seed);
      const auto fracs = parse_list(syn_fracs);
      if (fracs.size() != 3) throw Error(ErrorCode::BadFractions, "expected three fractions");
      SynthData sd = generate(syc);
      Rng rng(mix_seed(syc.seed, 1));
      auto parts = holdout_split(sd.data, fracs, rng);
      fs::create_directories(syn_dir);
      const std::string prov = provenance("synth", syc.seed, 0, dataset_hash(sd.data));
      sd.data.provenance = {prov};
      save_csv((fs::path(syn_dir) / "data.csv").string(), sd.data);
      const char* names[] = {"train.csv", "valid.csv", "test.csv"};
      for (std::size_t k = 0; k < 3; ++k) {
        parts[k].provenance = {prov};
        save_csv((fs::path(syn_dir) / names[k]).string(), parts[k]);
      }
      save_truth((fs::path(syn_dir) / "truth.json").string(), sd.truth);
      std::printf("synth: %zu rows, %zu features, %zu generating nodes -> %s\n", syc.rows, syc.features,
                  sd.truth.spn.size(), syn_dir.c_str());
    } else if (*ev_cmd) {
      const std::uint64_t seed = resolve_seed(ev_seed_opt, ev_seed);
      SynthEvalOptions opt;
      opt.fit = ev_fo;
      opt.rdc_grid = parse_list(ev_grid);
      Confusion conf;
      std::vector<FeatureEval> all;
      std::ostringstream md;
      md << "# Synthetic evaluation\n\n| dataset | rdc | test loglik | generating loglik | gap per feature | mean type cosine |\n"
            "|---|---|---|---|---|---|\n";
      double cos_sum = 0.0;
      for (std::size_t i = 0; i < ev_dirs.size(); ++i) {
        const fs::path dir(ev_dirs[i]);
        const Dataset train = load_csv((dir / "train.csv").string());
        const Dataset valid = load_csv((dir / "valid.csv").string());
        const Dataset test = load_csv((dir / "test.csv").string());
        const GroundTruth truth = load_truth((dir / "truth.json").string());
        opt.fit.structure.seed = mix_seed(seed, 2 * i);
        opt.fit.gibbs.seed = mix_seed(seed, 2 * i + 1);
        const SynthEval ev = evaluate_synthetic(train, valid, test, truth, opt);
        double c = 0.0;
        for (const auto& f : ev.features) {
          conf.add(f);
          all.push_back(f);
          c += f.type_cosine;
          cos_sum += f.type_cosine;
        }
        c /= static_cast<double>(ev.features.size());
        char buf[256];
        std::snprintf(buf, sizeof buf, "| %s | %.1f | %.4f | %.4f | %.4f | %.3f |\n", dir.filename().c_str(),
                      ev.chosen_rdc, ev.test_loglik, ev.oracle_loglik, ev.loglik_gap_per_feature(), c);
        md << buf;
        std::fputs(buf, stdout);
      }
      char buf[128];
      std::snprintf(buf, sizeof buf, "\nmean type cosine similarity: %.4f\n\n", cos_sum / static_cast<double>(all.size()));
      md << buf;
      std::fputs(buf, stdout);
      write_confusion_md(md, conf);
      md << '\n' << provenance("eval-synth", seed, 0, 0) << '\n';
      if (!ev_out.empty()) open_out(ev_out) << md.str();
      if (!ev_csv.empty()) {
        auto out = open_out(ev_csv);
        write_feature_evals_csv(out, all);
        out << provenance("eval-synth", seed, 0, 0) << '\n';
      }
    } else if (*rep_cmd) {
      const Model m = load_model(rp_model);
      const Dataset data = load_csv(rp_data);
      check_schema(m, data);
      const fs::path md_path(rp_out);
      const fs::path csv_path = md_path.parent_path() / (md_path.stem().string() + "_densities.csv");
      {
        auto out = open_out(csv_path.string());
        write_density_csv(out, m, rp_points);
        out << provenance("report", m) << '\n';
      }
      auto out = open_out(rp_out);
      write_report(out, m, data, csv_path.filename().string());
      out << '\n' << provenance("report", m) << '\n';
    }
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s: %s\n", std::string(to_string(e.code())).c_str(), e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: Internal: %s\n", e.what());
    return 1;
  }
  return 0;
}
