#include "metabias/cli.hpp"

#include <openssl/evp.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "metabias/bma_screen.hpp"
#include "metabias/dataset.hpp"
#include "metabias/error.hpp"
#include "metabias/json_io.hpp"
#include "metabias/metareg.hpp"
#include "metabias/pooling.hpp"
#include "metabias/rng.hpp"
#include "metabias/selection/ensemble.hpp"
#include "metabias/simulate.hpp"

namespace fs = std::filesystem;

namespace metabias::cli {

std::string sha256_hex(const std::string& bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw NumericalError("SHA-256 digest failed");
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
  return os.str();
}

namespace {

struct Options {
  std::string input;
  std::string schema;
  std::string out_dir = ".";
  std::uint64_t seed = 1;
  int chains = selection::SamplerConfig{}.chains;
  int iters = selection::SamplerConfig{}.iterations;
  int burn_in = selection::SamplerConfig{}.burn_in;
  double threshold = 0.1;
  std::string moderators;
  std::string forced = "se";
  bool no_outlier_filter = false;
  bool precision_weighted = false;
  int jobs = 1;
  std::string config;
};

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    if (b == std::string::npos) continue;
    const auto e = item.find_last_not_of(" \t");
    out.push_back(item.substr(b, e - b + 1));
  }
  return out;
}

std::string iso_time(std::time_t t) {
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// SOURCE_DATE_EPOCH pins the manifest clock for reproducible reruns.
std::string now_iso() {
  if (const char* epoch = std::getenv("SOURCE_DATE_EPOCH")) {
    char* end = nullptr;
    const long long v = std::strtoll(epoch, &end, 10);
    if (end != epoch && *end == '\0') return iso_time(static_cast<std::time_t>(v));
  }
  return iso_time(std::chrono::system_clock::to_time_t(std::chrono::system_clock::now()));
}

class Run {
 public:
  Run(std::string command, const Options& opt, std::ostream& out)
      : command_(std::move(command)), opt_(opt), out_(out), started_(now_iso()) {
    fs::create_directories(opt_.out_dir);
  }

  const Options& opt() const { return opt_; }
  std::ostream& out() { return out_; }

  void write(const std::string& name, const std::string& content) {
    const fs::path path = fs::path(opt_.out_dir) / name;
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ValidationError("cannot open " + path.string() + " for writing");
    f << content;
    if (!f) throw ValidationError("failed writing " + path.string());
    outputs_.push_back(name);
  }

  void write_json(const std::string& name, const nlohmann::json& j) { write(name, dump_json(j)); }

  void finish(const std::vector<std::pair<std::string, std::string>>& settings) {
    std::string canon = "command=" + command_ + "\n";
    for (const auto& [k, v] : settings) canon += k + "=" + v + "\n";
    const auto add_file = [&](const char* key, const std::string& path) {
      if (!path.empty()) canon += std::string(key) + "_sha256=" + sha256_hex(read_file(path)) + "\n";
    };
    add_file("input", opt_.input);
    add_file("schema", opt_.schema);
    add_file("config", opt_.config);
    nlohmann::json m{{"command", command_},
                     {"config_digest", sha256_hex(canon)},
                     {"seed", opt_.seed},
                     {"tool_version", kToolVersion},
                     {"outputs", outputs_},
                     {"timestamps", {{"started", started_}, {"finished", now_iso()}}}};
    write_json("manifest.json", m);
  }

 private:
  std::string command_;
  const Options& opt_;
  std::ostream& out_;
  std::string started_;
  std::vector<std::string> outputs_;
};

MetaDataset load_input(const Options& opt) {
  if (opt.input.empty()) throw ValidationError("--input is required");
  if (!opt.schema.empty()) return load_csv(opt.input, ModeratorSchema::load(opt.schema));
  return load_csv(opt.input);
}

PooledEstimate do_pool(const MetaDataset& data, Run& run) {
  const auto p = uwls(data);
  run.write_json("pool.json", p.to_json());
  run.out() << "pool: mu_hat " << format_number(p.mu_hat) << ", se_cluster " << format_number(p.se_cluster)
            << ", p " << format_number(p.p_value_cluster) << '\n';
  return p;
}

void do_funnel(const MetaDataset& data, double mu, Run& run) {
  std::ostringstream os;
  write_funnel_csv(os, funnel_data(data, mu));
  run.write("funnel.csv", os.str());
}

void do_bias(const MetaDataset& data, Run& run) {
  const auto& opt = run.opt();
  selection::EnsembleConfig cfg;
  cfg.sampler.chains = opt.chains;
  cfg.sampler.iterations = opt.iters;
  cfg.sampler.burn_in = opt.burn_in;
  cfg.seed = derive_seed(opt.seed, "bias");
  cfg.jobs = opt.jobs;
  const auto r = selection::run_ensemble(data, cfg);
  run.write_json("ensemble.json", r.to_json());
  std::ostringstream os;
  selection::write_weightfn_csv(os, r.summary);
  run.write("weightfn.csv", os.str());
  run.out() << "bias: P(effect) " << format_number(r.summary.effect.posterior_prob) << ", P(heterogeneity) "
            << format_number(r.summary.heterogeneity.posterior_prob) << ", P(bias) "
            << format_number(r.summary.bias.posterior_prob) << ", mu " << format_number(r.summary.mu.mean) << '\n';
  for (const auto& m : r.models)
    if (!m.draws.converged && m.draws.size() > 0)
      run.out() << "warning: model " << m.spec.label() << " max R-hat " << format_number(m.draws.max_rhat) << '\n';
}

std::vector<std::string> screen_candidates(const MetaDataset& data, const Options& opt,
                                           const std::vector<std::string>& forced) {
  auto candidates = split_list(opt.moderators);
  if (candidates.empty()) {
    for (const auto& name : data.schema().names())
      if (std::find(forced.begin(), forced.end(), name) == forced.end()) candidates.push_back(name);
  }
  return candidates;
}

BmaScreenResult do_screen(const MetaDataset& data, Run& run) {
  const auto& opt = run.opt();
  const auto forced = split_list(opt.forced);
  BmaConfig cfg;
  cfg.jobs = opt.jobs;
  cfg.precision_weighted = opt.precision_weighted;
  const auto r = bma_screen(data, screen_candidates(data, opt, forced), forced, opt.threshold, cfg);
  std::ostringstream os;
  write_screen_csv(os, r);
  run.write("screen.csv", os.str());
  run.out() << "screen: " << r.n_models_evaluated << " models, " << r.included.size() << " included\n";
  return r;
}

void do_metareg(const MetaDataset& data, const std::vector<std::string>& moderators, Run& run) {
  const auto fit = reml_fit(data, moderators);
  const auto rows = coefficient_table(fit);
  std::ostringstream os;
  write_coefficient_csv(os, rows);
  run.write("metareg.csv", os.str());
  auto j = fit.to_json();
  j["coefficients"] = coefficient_json(rows);
  run.write_json("metareg.json", j);
  run.out() << "metareg: tau2_between " << format_number(fit.tau2_between) << ", tau2_within "
            << format_number(fit.tau2_within) << '\n';
}

std::vector<std::pair<std::string, std::string>> settings(const Options& o, const std::string& command) {
  std::vector<std::pair<std::string, std::string>> s{{"seed", std::to_string(o.seed)}};
  if (command == "bias" || command == "full") {
    s.emplace_back("chains", std::to_string(o.chains));
    s.emplace_back("iters", std::to_string(o.iters));
    s.emplace_back("burn_in", std::to_string(o.burn_in));
  }
  if (command == "screen" || command == "full") {
    s.emplace_back("threshold", format_number(o.threshold));
    s.emplace_back("forced", o.forced);
    s.emplace_back("precision_weighted", o.precision_weighted ? "true" : "false");
  }
  if (command == "screen" || command == "metareg" || command == "full") s.emplace_back("moderators", o.moderators);
  if (command == "full") s.emplace_back("outlier_filter", o.no_outlier_filter ? "false" : "true");
  return s;
}

int execute(const std::string& command, Options& opt, bool seed_given, std::ostream& out) {
  if (command == "simulate") {
    SimConfig cfg;
    if (!opt.config.empty()) {
      try {
        cfg = SimConfig::from_json(nlohmann::json::parse(read_file(opt.config)));
      } catch (const nlohmann::json::parse_error& e) {
        throw SchemaError(std::string("invalid simulation config: ") + e.what());
      }
      if (!seed_given) opt.seed = cfg.seed;
    }
    cfg.seed = opt.seed;
    Run run(command, opt, out);
    const auto data = generate(cfg);
    std::ostringstream os;
    write_csv(os, data);
    run.write("simulated.csv", os.str());
    run.write_json("sim_config.json", cfg.to_json());
    out << "simulate: " << data.size() << " estimates in " << data.n_studies() << " studies\n";
    run.finish(settings(opt, command));
    return 0;
  }

  const auto data = load_input(opt);
  Run run(command, opt, out);
  if (command == "pool") {
    do_pool(data, run);
  } else if (command == "funnel") {
    do_funnel(data, uwls(data).mu_hat, run);
  } else if (command == "bias") {
    do_bias(data, run);
  } else if (command == "metareg") {
    do_metareg(data, split_list(opt.moderators), run);
  } else if (command == "screen") {
    do_screen(data, run);
  } else if (command == "full") {
    MetaDataset analysed = data;
    std::vector<std::string> excluded;
    if (!opt.no_outlier_filter) {
      auto filtered = filter_outliers(data);
      excluded = filtered.excluded_ids;
      analysed = std::move(filtered.retained);
    }
    std::string outliers = "estimate_id\n";
    for (const auto& id : excluded) outliers += id + "\n";
    run.write("outliers.csv", outliers);
    out << "outliers: " << excluded.size() << " excluded\n";
    std::ostringstream os;
    write_describe_csv(os, describe(analysed));
    run.write("describe.csv", os.str());
    const auto pooled = do_pool(analysed, run);
    do_funnel(analysed, pooled.mu_hat, run);
    do_bias(analysed, run);
    const auto screen = do_screen(analysed, run);
    // Forced regressors first, then retained candidates in the order given.
    std::vector<std::string> chosen;
    for (const auto& f : split_list(opt.forced)) chosen.push_back(f);
    for (const auto& c : screen.candidates)
      if (screen.included.count(c)) chosen.push_back(c);
    do_metareg(analysed, chosen, run);
  }
  run.finish(settings(opt, command));
  return 0;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Meta-analysis of reported effect sizes: pooling, publication-bias model averaging, "
               "three-level meta-regression and moderator screening.",
               "metabias"};
  app.set_version_flag("--version", kToolVersion);
  app.require_subcommand(1);
  Options opt;

  const auto add_common = [&](CLI::App* sub, bool needs_input) {
    if (needs_input) {
      sub->add_option("--input", opt.input, "Dataset CSV (estimate_id, study_id, theta, se, moderators)")->required();
      sub->add_option("--schema", opt.schema, "Moderator schema JSON: [{\"name\": ..., \"kind\": binary|continuous}]");
    }
    sub->add_option("--out-dir", opt.out_dir, "Directory for output files")->capture_default_str();
    sub->add_option("--seed", opt.seed, "Random seed")->capture_default_str();
    sub->add_option("--jobs", opt.jobs, "Maximum worker threads")->capture_default_str()->check(CLI::PositiveNumber);
  };
  const auto add_sampler = [&](CLI::App* sub) {
    sub->add_option("--chains", opt.chains, "MCMC chains per model")->capture_default_str()->check(CLI::Range(2, 64));
    sub->add_option("--iters", opt.iters, "Iterations per chain, burn-in included")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    sub->add_option("--burn-in", opt.burn_in, "Burn-in iterations per chain")
        ->capture_default_str()
        ->check(CLI::NonNegativeNumber);
  };
  const auto add_screen = [&](CLI::App* sub) {
    sub->add_option("--threshold", opt.threshold, "PIP inclusion threshold")->capture_default_str()->check(
        CLI::Range(0.0, 1.0));
    sub->add_option("--forced", opt.forced, "Comma list of regressors kept in every model")->capture_default_str();
    sub->add_flag("--precision-weighted", opt.precision_weighted, "Weight the screening regression by 1/se^2");
  };

  auto* pool = app.add_subcommand("pool", "UWLS mean effect with study-clustered inference (pool.json)");
  add_common(pool, true);
  auto* funnel = app.add_subcommand("funnel", "Funnel scatter and pseudo-confidence bands (funnel.csv)");
  add_common(funnel, true);
  auto* bias = app.add_subcommand("bias", "Model-averaged selection/PET/PEESE ensemble (ensemble.json, weightfn.csv)");
  add_common(bias, true);
  add_sampler(bias);
  auto* metareg = app.add_subcommand("metareg", "Three-level REML meta-regression (metareg.csv, metareg.json)");
  add_common(metareg, true);
  metareg->add_option("--moderators", opt.moderators, "Comma list of regressors (intercept always included)");
  auto* screen = app.add_subcommand("screen", "Moderator screening by posterior inclusion probability (screen.csv)");
  add_common(screen, true);
  screen->add_option("--moderators", opt.moderators, "Comma list of candidates (default: every schema moderator)");
  add_screen(screen);
  auto* simulate = app.add_subcommand("simulate", "Synthetic dataset from a JSON config (simulated.csv)");
  add_common(simulate, false);
  simulate->add_option("--config", opt.config, "Simulation config JSON (default settings when omitted)");
  auto* full = app.add_subcommand("full", "Outlier filter, describe, pool, funnel, bias, screen, metareg");
  add_common(full, true);
  add_sampler(full);
  full->add_option("--moderators", opt.moderators, "Comma list of screening candidates");
  add_screen(full);
  full->add_flag("--no-outlier-filter", opt.no_outlier_filter, "Skip the 10-IQR outlier exclusion");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return 1;
  }

  CLI::App* chosen = app.get_subcommands().front();
  const bool seed_given = chosen->count("--seed") > 0;
  try {
    if (opt.burn_in >= opt.iters) throw DomainError("--burn-in must be smaller than --iters");
    return execute(chosen->get_name(), opt, seed_given, out);
  } catch (const RankDeficientError& e) {
    err << "error: " << e.what() << "\ncolumns:";
    for (const auto& c : e.columns()) err << ' ' << c;
    err << '\n';
    return 1;
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const ConvergenceError& e) {
    err << "numerical failure: " << e.what() << '\n';
    for (const auto& line : e.trace()) err << "  " << line << '\n';
    return 2;
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << '\n';
    return 2;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return 2;
  }
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::vector<const char*> argv;
  argv.push_back("metabias");
  for (const auto& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace metabias::cli
