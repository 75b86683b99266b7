// Command-line front end: generate, fit, eval, crosstab, prune, errors, plotdata.
// Exit codes: 0 ok, 1 usage, 2 invalid model or irreparable Q, 3 I/O.

#include "occam/occam.hpp"

#include "CLI11.hpp"

#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

namespace {

constexpr int kUsage = 1;
constexpr int kInvalid = 2;
constexpr int kIo = 3;

struct InvalidModel : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::array<long, 4> parse_budget(const std::string& text) {
  const std::array<long, 4> shares{6, 3, 3, 3};
  std::vector<long> parts;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      parts.push_back(std::stol(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw occam::InvalidArgument("budget must be an integer or four comma-separated integers");
    }
  }
  std::array<long, 4> out{};
  if (parts.size() == 1) {
    for (int s = 0; s < 4; ++s) out[s] = std::max(1L, parts[0] * shares[s] / 15);
  } else if (parts.size() == 4) {
    std::copy(parts.begin(), parts.end(), out.begin());
  } else {
    throw occam::InvalidArgument("budget must be an integer or four comma-separated integers");
  }
  for (long b : out)
    if (b <= 0) throw occam::InvalidArgument("budgets must be positive");
  return out;
}

occam::FitResult load(const std::string& path) {
  try {
    return occam::io::load_model(path);
  } catch (const occam::InvalidArgument& e) {
    throw InvalidModel(std::string("invalid model '") + path + "': " + e.what());
  }
}

void print_q(std::ostream& out, const occam::QBreakdown& q) {
  out << std::setprecision(10) << "q_total " << q.q_total << "\nq_l " << q.q_l << "\nq_delta " << q.q_delta
      << "\nq_r " << q.q_r << "\nvalid " << (q.valid ? "true" : "false") << '\n';
}

void print_fit(std::ostream& out, const occam::FitResult& f, double threshold) {
  print_q(out, f.q);
  out << "components " << f.params.n_components() << "\nsignificant " << f.significant_components(threshold)
      << "\nweights";
  for (double w : f.params.component_weights()) out << ' ' << w;
  out << "\nmodel_valid " << (f.valid ? "true" : "false") << "\nrunaway_width "
      << (f.runaway_width ? "true" : "false") << '\n';
}

struct FitOptions {
  std::string mode = "global";
  std::string scheme = "sqnorm";
  int max_components = 5;
  std::uint64_t seed = 1;
  std::string budget = "15000";
  double delta_x = 1.0;
  std::string objective = "q";
  double threshold = 0.01;

  void add(CLI::App* app) {
    app->add_option("--mode", mode, "Q variation: local|global")->check(CLI::IsMember({"local", "global"}));
    app->add_option("--scheme", scheme, "amplitude scheme: sqnorm|hyperspherical")
        ->check(CLI::IsMember({"sqnorm", "hyperspherical"}));
    app->add_option("--max-components", max_components, "number of mixture components")->check(CLI::PositiveNumber);
    app->add_option("--seed", seed, "random seed");
    app->add_option("--budget", budget, "total evaluations, or four per-stage counts a,b,c,d");
    app->add_option("--delta-x", delta_x, "data precision")->check(CLI::PositiveNumber);
    app->add_option("--objective", objective, "q (bit count) or likelihood")
        ->check(CLI::IsMember({"q", "likelihood"}));
    app->add_option("--threshold", threshold, "significance threshold on component weights");
  }

  occam::FitConfig config() const {
    occam::FitConfig c;
    c.mode = occam::parse_mode(mode);
    c.scheme = occam::parse_scheme(scheme);
    c.max_components = max_components;
    c.seed = seed;
    c.stage_budgets = parse_budget(budget);
    c.delta_x = delta_x;
    c.objective = objective == "q" ? occam::Objective::BitCount : occam::Objective::LikelihoodOnly;
    c.significant_amplitude = threshold;
    return c;
  }
};

std::vector<std::string> split_list(const std::vector<std::string>& items) {
  std::vector<std::string> out;
  for (const auto& it : items) {
    std::stringstream ss(it);
    std::string s;
    while (std::getline(ss, s, ','))
      if (!s.empty()) out.push_back(s);
  }
  return out;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bit-count regularized Gaussian mixture fitting"};
  app.require_subcommand(1);

  // generate
  auto* gen = app.add_subcommand("generate", "draw a sample from the default three-component mixture");
  int gen_dim = 2, gen_n = 100;
  std::uint64_t gen_seed = 1;
  std::string gen_out;
  gen->add_option("--dim", gen_dim, "1 (projection on the first axis) or 2")->check(CLI::IsMember({1, 2}));
  gen->add_option("-n,--n", gen_n, "sample size")->check(CLI::PositiveNumber);
  gen->add_option("--seed", gen_seed, "random seed");
  gen->add_option("-o,--out", gen_out, "output CSV (default stdout)");

  // fit
  auto* fitc = app.add_subcommand("fit", "fit a mixture by minimizing Q");
  FitOptions fit_opts;
  std::string fit_in, fit_out;
  bool fit_prune = false;
  fitc->add_option("-i,--data", fit_in, "dataset CSV")->required();
  fitc->add_option("-o,--out", fit_out, "model JSON output");
  fitc->add_flag("--prune", fit_prune, "prune insignificant components afterwards");
  fit_opts.add(fitc);

  // eval
  auto* evalc = app.add_subcommand("eval", "evaluate Q of a model on a dataset");
  std::string eval_model, eval_data, eval_mode, eval_out;
  bool eval_repair = false;
  evalc->add_option("-m,--model", eval_model, "model JSON")->required();
  evalc->add_option("-i,--data", eval_data, "dataset CSV")->required();
  evalc->add_option("--mode", eval_mode, "override the model's Q variation")
      ->check(CLI::IsMember({"local", "global"}));
  evalc->add_flag("--repair", eval_repair, "shrink delta m uniformly when Q is infinite");
  evalc->add_option("-o,--out", eval_out, "write the (repaired) model here");

  // crosstab
  auto* ct = app.add_subcommand("crosstab", "cross-evaluate models on samples");
  std::vector<std::string> ct_models, ct_data;
  std::string ct_csv, ct_base, ct_mode = "global";
  int ct_boot = 0;
  FitOptions ct_fit;
  ct->add_option("--models", ct_models, "model JSON files (comma separated or repeated)");
  ct->add_option("--data", ct_data, "dataset CSV files, aligned with --models");
  ct->add_option("--base", ct_base, "base dataset to bootstrap from (fits the models itself)");
  ct->add_option("--bootstrap", ct_boot, "number of bootstrap samples with --base")->check(CLI::PositiveNumber);
  ct->add_option("--csv", ct_csv, "machine-readable output");
  ct_fit.add(ct);

  // prune
  auto* pr = app.add_subcommand("prune", "drop insignificant or collapsed components");
  std::string pr_model, pr_data, pr_out;
  double pr_threshold = 0.01, pr_width = 1e-6;
  pr->add_option("-m,--model", pr_model, "model JSON")->required();
  pr->add_option("-i,--data", pr_data, "dataset CSV")->required();
  pr->add_option("-o,--out", pr_out, "pruned model JSON");
  pr->add_option("--threshold", pr_threshold, "amplitude threshold");
  pr->add_option("--min-width", pr_width, "width floor as a fraction of the data range");

  // errors
  auto* er = app.add_subcommand("errors", "propagated parameter uncertainties");
  std::string er_model, er_data, er_method = "simple";
  er->add_option("-m,--model", er_model, "model JSON")->required();
  er->add_option("-i,--data", er_data, "dataset CSV")->required();
  er->add_option("--method", er_method, "simple|full")->check(CLI::IsMember({"simple", "full"}));

  // plotdata
  auto* pd = app.add_subcommand("plotdata", "write density grid and sample for plotting");
  std::string pd_model, pd_data, pd_prefix = "plot";
  int pd_points = 0;
  pd->add_option("-m,--model", pd_model, "model JSON")->required();
  pd->add_option("-i,--data", pd_data, "dataset CSV")->required();
  pd->add_option("--prefix", pd_prefix, "output prefix");
  pd->add_option("--points", pd_points, "grid points per axis")->check(CLI::NonNegativeNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kUsage;
  }

  try {
    if (*gen) {
      const occam::Dataset d = occam::io::generate(occam::io::default_spec(gen_dim, gen_n, gen_seed));
      if (gen_out.empty())
        occam::io::write_csv(std::cout, d);
      else
        occam::io::write_csv(gen_out, d);
    } else if (*fitc) {
      const occam::Dataset d = occam::io::read_csv(fit_in);
      const occam::FitConfig cfg = fit_opts.config();
      occam::FitResult f = occam::fit(d, cfg);
      if (fit_prune) f = occam::prune(f, d, cfg.significant_amplitude, cfg.min_width_fraction);
      if (!fit_out.empty()) occam::io::save_model(fit_out, f);
      print_fit(std::cout, f, cfg.significant_amplitude);
      if (!f.valid) return kInvalid;
    } else if (*evalc) {
      occam::FitResult f = load(eval_model);
      const occam::Dataset d = occam::io::read_csv(eval_data);
      if (!eval_mode.empty()) f.mode = occam::parse_mode(eval_mode);
      const occam::QOptions opts{f.mode, f.delta_x};
      f.q = occam::QEvaluator(d, opts)(f.params, f.delta_m);
      if (!f.q.valid && eval_repair) {
        const occam::RepairResult r = occam::repair_delta_m(d, f.params, f.delta_m, opts);
        std::cout << "repaired_scale " << r.scale << "\nboundary_scale " << r.boundary_scale << '\n';
        f.delta_m = r.delta_m;
        f.q = r.q_after;
      }
      f.valid = f.q.valid && !f.runaway_width;
      print_q(std::cout, f.q);
      if (!eval_out.empty()) occam::io::save_model(eval_out, f);
      if (!f.q.valid) return kInvalid;
    } else if (*ct) {
      std::vector<occam::FitResult> fits;
      std::vector<occam::Dataset> samples;
      std::vector<std::string> ids;
      if (!ct_base.empty()) {
        if (ct_boot < 1) throw occam::InvalidArgument("--base needs --bootstrap N");
        const occam::Dataset base = occam::io::read_csv(ct_base);
        const occam::FitConfig cfg = ct_fit.config();
        for (int b = 0; b < ct_boot; ++b) {
          samples.push_back(occam::io::bootstrap(base, cfg.seed + 1000003ULL * (b + 1)));
          fits.push_back(occam::fit(samples.back(), cfg));
          ids.push_back("b" + std::to_string(b));
        }
      } else {
        const auto models = split_list(ct_models), data = split_list(ct_data);
        if (models.empty() || models.size() != data.size())
          throw occam::InvalidArgument("--models and --data must list the same number of files");
        for (std::size_t i = 0; i < models.size(); ++i) {
          fits.push_back(load(models[i]));
          samples.push_back(occam::io::read_csv(data[i]));
          ids.push_back("#" + std::to_string(i));
        }
      }
      const occam::io::CrossTable t = occam::io::crosstab(fits, samples, occam::parse_mode(ct_fit.mode), ids, ids);
      occam::io::write_crosstab_text(std::cout, t);
      if (!ct_csv.empty()) {
        std::ofstream out(ct_csv);
        if (!out) throw occam::IoError("cannot open '" + ct_csv + "' for writing");
        occam::io::write_crosstab_csv(out, t);
      }
    } else if (*pr) {
      const occam::FitResult f = load(pr_model);
      const occam::Dataset d = occam::io::read_csv(pr_data);
      const occam::FitResult p = occam::prune(f, d, pr_threshold, pr_width);
      if (!pr_out.empty()) occam::io::save_model(pr_out, p);
      std::cout << "removed";
      for (std::size_t k = f.pruned.size(); k < p.pruned.size(); ++k) std::cout << ' ' << p.pruned[k];
      std::cout << '\n';
      print_fit(std::cout, p, pr_threshold);
      if (!p.valid) return kInvalid;
    } else if (*er) {
      const occam::FitResult f = load(er_model);
      const occam::Dataset d = occam::io::read_csv(er_data);
      occam::ErrorOptions o;
      o.method = occam::parse_error_method(er_method);
      const occam::ErrorEstimate e = occam::estimate_errors(d, f, o);
      if (!e.stationary) std::cerr << "warning: model is not a stationary point of Q on this dataset\n";
      const occam::ParamLayout l = f.params.layout();
      const occam::Vector p = f.params.flatten();
      std::cout << std::setprecision(8) << "parameter,value,std,delta_m,std_log_delta_m\n";
      for (int k = 0; k < l.n_params(); ++k) {
        std::string name;
        if (l.is_amplitude(k))
          name = "amp_" + std::to_string(k);
        else if (l.is_mean(k))
          name = "mean_" + std::to_string((k - l.n_amp()) / l.n_dim) + "_" + std::to_string((k - l.n_amp()) % l.n_dim);
        else {
          const int r = k - l.n_amp() - l.n_components * l.n_dim;
          name = "log_width_" + std::to_string(r / l.n_dim) + "_" + std::to_string(r % l.n_dim);
        }
        std::cout << name << ',' << p[k] << ',' << e.std[k] << ',' << std::exp(f.delta_m.log_values[k]) << ','
                  << e.std[l.n_params() + k] << '\n';
      }
      std::cout << "# condition " << e.condition << " rank " << e.rank << "/" << e.std.size()
                << (e.rank_deficient ? " (rank deficient)" : "") << '\n';
    } else if (*pd) {
      const occam::FitResult f = load(pd_model);
      const occam::Dataset d = occam::io::read_csv(pd_data);
      occam::io::GridSpec g;
      g.points = pd_points;
      occam::io::write_plotdata(pd_prefix, occam::io::plotdata(f.params, d, g));
    }
  } catch (const InvalidModel& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kInvalid;
  } catch (const occam::IoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kIo;
  } catch (const occam::FormatError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kIo;
  } catch (const occam::InvalidArgument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const occam::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kInvalid;
  }
  return 0;
}
