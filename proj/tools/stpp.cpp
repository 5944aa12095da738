#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "stpp/stpp.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

constexpr const char* kVersion = "1.0.0";

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string fnv1a(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return "missing";
  std::uint64_t h = 1469598103934665603ULL;
  char buf[65536];
  while (in.read(buf, sizeof buf) || in.gcount() > 0) {
    for (std::streamsize k = 0; k < in.gcount(); ++k) {
      h ^= static_cast<unsigned char>(buf[k]);
      h *= 1099511628211ULL;
    }
    if (!in) break;
  }
  char out[17];
  std::snprintf(out, sizeof out, "%016llx", static_cast<unsigned long long>(h));
  return out;
}

std::vector<double> parse_list(const std::string& s, std::size_t expected, const char* what) {
  std::vector<double> v;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    double d;
    if (!stpp::io::parse_double(stpp::io::trim_cell(item), d))
      throw UsageError(std::string("bad number '") + item + "' in " + what);
    v.push_back(d);
  }
  if (expected && v.size() != expected)
    throw UsageError(std::string(what) + " needs " + std::to_string(expected) + " comma-separated numbers");
  return v;
}

std::array<std::size_t, 3> parse_dims(const std::string& s, const char* what) {
  const auto v = parse_list(s, 3, what);
  std::array<std::size_t, 3> d{};
  for (int k = 0; k < 3; ++k) {
    if (!(v[static_cast<std::size_t>(k)] >= 1.0)) throw UsageError(std::string(what) + " entries must be >= 1");
    d[static_cast<std::size_t>(k)] = static_cast<std::size_t>(v[static_cast<std::size_t>(k)]);
  }
  return d;
}

// Shared state of one invocation.
struct Run {
  std::string command;
  std::string out_dir;
  std::uint64_t seed = 0;
  bool seed_given = false;
  bool emit_svg = false;
  std::vector<std::string> args;  // argv without --threads and the output directory
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;

  std::string path(const std::string& name) const { return (fs::path(out_dir) / name).string(); }

  std::ofstream open(const std::string& name) {
    outputs.push_back(name);
    return stpp::io::open_out(path(name));
  }
  void write_text(const std::string& name, const std::string& text) {
    auto out = open(name);
    out << text;
  }
  void write_json(const std::string& name, const ordered_json& j) { write_text(name, j.dump(2) + "\n"); }

  void input(const std::string& p) {
    if (!p.empty()) inputs.push_back(p);
  }

  void manifest() {
    ordered_json j;
    j["command"] = command;
    j["version"] = kVersion;
    j["arguments"] = args;
    if (seed_given) j["seed"] = seed;
    ordered_json in = ordered_json::object();
    for (const auto& p : inputs) in[p] = fnv1a(p);
    j["inputs"] = in;
    ordered_json out = ordered_json::object();
    for (const auto& p : outputs) out[p] = fnv1a(path(p));
    j["outputs"] = out;
    std::ofstream f = stpp::io::open_out(path("run.json"));
    f << j.dump(2) << "\n";
  }
};

ordered_json num(double v) {
  if (std::isfinite(v)) return v;
  return nullptr;
}

ordered_json vec_json(const Eigen::VectorXd& v) {
  ordered_json a = ordered_json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(num(v[i]));
  return a;
}

ordered_json named(const std::vector<std::string>& names, const Eigen::VectorXd& v) {
  ordered_json o = ordered_json::object();
  for (std::size_t k = 0; k < names.size(); ++k) o[names[k]] = num(v[static_cast<Eigen::Index>(k)]);
  return o;
}

ordered_json matrix_rows(const Eigen::MatrixXd& m) {
  ordered_json a = ordered_json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) a.push_back(vec_json(m.row(i).transpose()));
  return a;
}

void write_values(Run& run, const std::string& name, const std::string& header, const std::vector<double>& v) {
  auto out = run.open(name);
  out << header << "\n";
  for (double x : v) out << stpp::io::format_double(x) << "\n";
}

// Input options shared by commands that read a pattern.
struct PatternInput {
  std::string pattern, network, window, time;

  stpp::PointPattern load(Run& run) const {
    stpp::PatternOptions po;
    if (!network.empty()) {
      po.network = std::make_shared<const stpp::LinearNetwork>(stpp::io::read_network_json(network));
      run.input(network);
    }
    if (!window.empty()) {
      const auto w = parse_list(window, 4, "--window");
      po.window = stpp::SpatialWindow{w[0], w[1], w[2], w[3]};
    }
    if (!time.empty()) {
      const auto t = parse_list(time, 2, "--time");
      po.interval = stpp::TimeInterval{t[0], t[1]};
    }
    run.input(pattern);
    return stpp::io::read_pattern_csv(pattern, po);
  }
  void add(CLI::App* app, const std::string& flag = "--pattern") {
    app->add_option(flag, pattern, "pattern CSV (x,y,t[,marks])")->required()->check(CLI::ExistingFile);
    app->add_option("--network", network, "network JSON")->check(CLI::ExistingFile);
    app->add_option("--window", window, "x0,x1,y0,y1 (default: enclosing box or network box)");
    app->add_option("--time", time, "t0,t1 (default: enclosing interval)");
  }
};

stpp::CovariateSet load_covariates(Run& run, const std::vector<std::string>& specs) {
  stpp::CovariateSet covs;
  for (const auto& s : specs) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0) throw UsageError("--covariate expects name=path, got '" + s + "'");
    const std::string name = s.substr(0, eq), path = s.substr(eq + 1);
    run.input(path);
    covs[name] = std::make_shared<const stpp::CovariateGrid>(stpp::read_grid_csv(path, name));
  }
  return covs;
}

stpp::Domain make_domain(Run& run, const std::string& window, const std::string& time, const std::string& network) {
  const auto t = parse_list(time, 2, "--time");
  const stpp::TimeInterval iv{t[0], t[1]};
  if (!network.empty()) {
    run.input(network);
    return stpp::Domain::on_network(std::make_shared<const stpp::LinearNetwork>(stpp::io::read_network_json(network)), iv);
  }
  const auto w = parse_list(window, 4, "--window");
  return stpp::Domain::planar({w[0], w[1], w[2], w[3]}, iv);
}

void emit_surface_svg(Run& run, const std::string& name, const stpp::SummarySurface& s, const std::string& title) {
  if (run.emit_svg) run.write_text(name, stpp::svg::heatmap(s.estimate, s.r, s.h, title));
}

stpp::SummaryConfig summary_config(const stpp::PointPattern& p, stpp::Statistic stat, const std::string& r,
                                   const std::string& h, bool normalize) {
  auto cfg = stpp::default_summary_config(p, stat);
  if (!r.empty()) cfg.r = parse_list(r, 0, "--r-grid");
  if (!h.empty()) cfg.h = parse_list(h, 0, "--h-grid");
  cfg.normalize = normalize;
  return cfg;
}

stpp::Statistic parse_stat(const std::string& s) {
  if (s == "K" || s == "k") return stpp::Statistic::K;
  if (s == "g" || s == "pcf") return stpp::Statistic::g;
  throw UsageError("statistic must be K or g");
}

ordered_json model_json(const stpp::FittedPoissonModel& m) {
  ordered_json j;
  j["model"] = "poisson";
  j["formula"] = m.formula.to_string();
  j["method"] = stpp::to_string(m.method);
  j["names"] = m.names;
  j["coefficients"] = vec_json(m.coef);
  j["std_errors"] = vec_json(m.std_errors);
  j["marked"] = m.marked;
  if (m.marked) j["type_mark"] = m.type_mark;
  j["converged"] = m.convergence.converged;
  j["iterations"] = m.convergence.iterations;
  j["deviance"] = num(m.convergence.deviance);
  j["quadrature"] = {{"n_data", m.quadrature.n_data},
                     {"n_dummy", m.quadrature.n_dummy},
                     {"nd", m.quadrature.nd},
                     {"volume", m.quadrature.volume},
                     {"types", m.quadrature.types},
                     {"warnings", m.quadrature.warnings}};
  return j;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spatio-temporal point pattern analysis"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  Run run;
  unsigned threads = 0;
  bool svg = false;
  std::string seed_text;

  auto common = [&](CLI::App* c, bool stochastic) {
    c->add_option("-o,--out", run.out_dir, "output directory")->required();
    c->add_option("--threads", threads, "worker threads (default: STPP_THREADS or all cores)");
    c->add_flag("--svg", svg, "also write SVG heatmaps");
    if (stochastic) c->add_option("--seed", seed_text, "random seed")->required();
  };

  // simulate -------------------------------------------------------------
  auto* sim = app.add_subcommand("simulate", "simulate point patterns");
  sim->require_subcommand(1);
  std::string window = "0,1,0,1", time = "0,1", network;

  auto* sim_pois = sim->add_subcommand("poisson", "Poisson process with constant or expression intensity");
  std::string lambda_expr;
  std::string par_list;
  std::vector<std::string> cov_specs;
  sim_pois->add_option("--lambda", lambda_expr, "constant or expression in x, y, t, par[k] and covariates")->required();
  sim_pois->add_option("--par", par_list, "comma-separated parameters for par[1], par[2], ...");
  sim_pois->add_option("--covariate", cov_specs, "name=grid.csv");

  auto* sim_etas = sim->add_subcommand("etas", "ETAS self-exciting process");
  stpp::EtasParams etas;
  sim_etas->add_option("--mu", etas.mu)->required();
  sim_etas->add_option("--k0", etas.k0)->required();
  sim_etas->add_option("--c", etas.c, "Omori offset")->capture_default_str();
  sim_etas->add_option("--p", etas.p, "Omori exponent")->capture_default_str();
  sim_etas->add_option("--d", etas.d, "spatial scale")->capture_default_str();
  sim_etas->add_option("--q", etas.q, "spatial exponent")->capture_default_str();
  sim_etas->add_option("--beta", etas.beta)->capture_default_str();
  sim_etas->add_option("--m0", etas.m0)->capture_default_str();
  sim_etas->add_option("--b", etas.b, "Gutenberg-Richter slope")->capture_default_str();

  auto* sim_lgcp = sim->add_subcommand("lgcp", "log-Gaussian Cox process on a grid");
  std::string lgcp_family = "separable-exponential", lgcp_grid = "12,12,8";
  double lgcp_sigma = 1.0, lgcp_alpha = 0.1, lgcp_beta = 0.1, lgcp_lambda0 = 100.0;
  sim_lgcp->add_option("--family", lgcp_family)->capture_default_str();
  sim_lgcp->add_option("--sigma", lgcp_sigma)->capture_default_str();
  sim_lgcp->add_option("--alpha", lgcp_alpha)->capture_default_str();
  sim_lgcp->add_option("--beta", lgcp_beta)->capture_default_str();
  sim_lgcp->add_option("--lambda0", lgcp_lambda0)->capture_default_str();
  sim_lgcp->add_option("--grid", lgcp_grid, "gx,gy,gt")->capture_default_str();

  for (auto* c : {sim_pois, sim_etas, sim_lgcp}) {
    common(c, true);
    c->add_option("--window", window, "x0,x1,y0,y1")->capture_default_str();
    c->add_option("--time", time, "t0,t1")->capture_default_str();
    if (c != sim_lgcp) c->add_option("--network", network, "network JSON")->check(CLI::ExistingFile);
  }

  // covariate --------------------------------------------------------------
  auto* cov = app.add_subcommand("covariate", "IDW interpolation of covariate samples onto a grid");
  std::string samples, cov_dims, cov_window, cov_time, cov_name = "cov";
  double cov_power = 2.0, cov_mult = 20.0;
  common(cov, false);
  cov->add_option("--samples", samples, "CSV with x,y,t,value")->required()->check(CLI::ExistingFile);
  cov->add_option("--power", cov_power)->capture_default_str();
  cov->add_option("--mult", cov_mult)->capture_default_str();
  cov->add_option("--dims", cov_dims, "nx,ny,nt (overrides --mult)");
  cov->add_option("--window", cov_window, "x0,x1,y0,y1");
  cov->add_option("--time", cov_time, "t0,t1");
  cov->add_option("--name", cov_name)->capture_default_str();

  // summary ----------------------------------------------------------------
  auto* summ = app.add_subcommand("summary", "second-order summaries");
  summ->require_subcommand(1);
  PatternInput pin;
  std::string intensity_path, stat = "K", r_grid, h_grid;
  bool normalize = false;
  auto* summ_global = summ->add_subcommand("global", "global K or pair correlation surface");
  auto* summ_local = summ->add_subcommand("local", "per-event (LISTA) surfaces");
  std::vector<std::size_t> lista_ids;
  summ_local->add_option("--ids", lista_ids, "1-based event ids (default: all)")->delimiter(',');
  for (auto* c : {summ_global, summ_local}) {
    common(c, false);
    pin.add(c);
    c->add_option("--intensity", intensity_path, "fitted intensity per event (default: n/volume)")
        ->check(CLI::ExistingFile);
    c->add_option("--stat", stat, "K or g")->capture_default_str();
    c->add_option("--r-grid", r_grid, "spatial lags, comma-separated");
    c->add_option("--h-grid", h_grid, "temporal lags, comma-separated");
    c->add_flag("--normalize", normalize, "networks: normalise by sum(1/lambda)");
  }

  // fit --------------------------------------------------------------------
  auto* fit = app.add_subcommand("fit", "model fitting");
  fit->require_subcommand(1);
  std::string formula = "~1", method = "glm", nd, type_mark, space_formula = "~1", time_formula = "~1";
  bool marked = false;
  double ridge = 0.0;
  std::optional<double> h_space, h_time;
  std::string first = "global", second = "global", family = "separable-exponential";

  auto* fit_pois = fit->add_subcommand("poisson", "log-linear Poisson model");
  fit_pois->add_option("--formula", formula)->capture_default_str();
  fit_pois->add_option("--method", method, "glm or lsr")->capture_default_str();
  fit_pois->add_flag("--marked", marked, "multitype fit over a categorical mark");
  fit_pois->add_option("--type-mark", type_mark, "categorical mark for --marked");
  fit_pois->add_option("--ridge", ridge, "ridge penalty on type contrasts")->capture_default_str();

  auto* fit_sep = fit->add_subcommand("separable", "separable Poisson model");
  fit_sep->add_option("--space-formula", space_formula)->capture_default_str();
  fit_sep->add_option("--time-formula", time_formula)->capture_default_str();

  auto* fit_loc = fit->add_subcommand("local-poisson", "locally weighted Poisson model");
  fit_loc->add_option("--formula", formula)->capture_default_str();
  fit_loc->add_option("--h-space", h_space, "spatial bandwidth");
  fit_loc->add_option("--h-time", h_time, "temporal bandwidth");

  auto* fit_lgcp = fit->add_subcommand("lgcp", "log-Gaussian Cox process by minimum contrast");
  fit_lgcp->add_option("--formula", formula)->capture_default_str();
  fit_lgcp->add_option("--first", first, "global or local")->capture_default_str();
  fit_lgcp->add_option("--second", second, "global or local")->capture_default_str();
  fit_lgcp->add_option("--family", family)->capture_default_str();
  fit_lgcp->add_option("--h-space", h_space, "spatial bandwidth for --first local");
  fit_lgcp->add_option("--h-time", h_time, "temporal bandwidth for --first local");

  for (auto* c : {fit_pois, fit_sep, fit_loc, fit_lgcp}) {
    common(c, true);
    pin.add(c);
    c->add_option("--nd", nd, "dummy grid nx,ny,nt");
    c->add_option("--covariate", cov_specs, "name=grid.csv");
  }

  // diagnose ---------------------------------------------------------------
  auto* diag = app.add_subcommand("diagnose", "goodness-of-fit diagnostics of a fitted intensity");
  diag->require_subcommand(1);
  double percentile = 0.95;
  auto* diag_global = diag->add_subcommand("global", "sum of squared K differences");
  auto* diag_local = diag->add_subcommand("local", "per-event outlying surfaces");
  diag_local->add_option("--p", percentile, "percentile of the discrepancy scores")->capture_default_str();
  for (auto* c : {diag_global, diag_local}) {
    common(c, false);
    pin.add(c);
    c->add_option("--intensity", intensity_path, "fitted intensity per event")->required()->check(CLI::ExistingFile);
    c->add_option("--r-grid", r_grid, "spatial lags");
    c->add_option("--h-grid", h_grid, "temporal lags");
  }

  // test -------------------------------------------------------------------
  auto* test = app.add_subcommand("test", "hypothesis tests");
  test->require_subcommand(1);
  auto* test_local = test->add_subcommand("local", "permutation test of local structure");
  PatternInput zin;
  std::size_t perms = 99;
  double alpha = 0.05;
  std::string test_method = "K";
  common(test_local, true);
  pin.add(test_local, "--background");
  test_local->add_option("--alt", zin.pattern, "alternative pattern CSV")->required()->check(CLI::ExistingFile);
  test_local->add_option("--method", test_method, "K or g")->capture_default_str();
  test_local->add_option("--k", perms, "permutations")->capture_default_str();
  test_local->add_option("--alpha", alpha)->capture_default_str();
  test_local->add_option("--r-grid", r_grid, "spatial lags");
  test_local->add_option("--h-grid", h_grid, "temporal lags");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  // Recorded arguments leave out what must not change the outputs.
  for (int k = 1; k < argc; ++k) {
    const std::string a = argv[k];
    if (a == "--threads" || a == "-o" || a == "--out") {
      ++k;
      continue;
    }
    if (a.rfind("--threads=", 0) == 0 || a.rfind("--out=", 0) == 0) continue;
    run.args.push_back(a);
  }

  try {
    if (threads > 0) stpp::set_threads(threads);
    run.emit_svg = svg;
    if (!seed_text.empty()) {
      double s;
      if (!stpp::io::parse_double(seed_text, s) || s < 0 || s != std::floor(s)) throw UsageError("--seed must be a non-negative integer");
      run.seed = std::stoull(seed_text);
      run.seed_given = true;
    }
    fs::create_directories(run.out_dir);

    if (sim->parsed()) {
      const stpp::Domain dom = make_domain(run, window, time, network);
      stpp::PointPattern p;
      ordered_json info;
      if (sim_pois->parsed()) {
        run.command = "simulate poisson";
        double c;
        stpp::IntensitySpec spec;
        if (stpp::io::parse_double(lambda_expr, c)) {
          spec = stpp::IntensitySpec::constant(c);
        } else {
          const auto par = par_list.empty() ? std::vector<double>{} : parse_list(par_list, 0, "--par");
          spec = stpp::IntensitySpec::expression(stpp::Expression::parse(lambda_expr), par, load_covariates(run, cov_specs));
        }
        stpp::PoissonSimInfo si;
        p = stpp::sim_poisson(spec, dom, run.seed, {}, &si);
        info = {{"lambda_max", si.lambda_max}, {"proposed", si.proposed}, {"bound_violations", si.bound_violations}};
      } else if (sim_etas->parsed()) {
        run.command = "simulate etas";
        stpp::EtasStats st;
        p = stpp::sim_etas(etas, dom, run.seed, {}, &st);
        info = {{"background", st.background}, {"offspring", st.offspring}, {"generations", st.generations},
                {"branching_ratio", st.branching_ratio}};
      } else {
        run.command = "simulate lgcp";
        stpp::CovarianceModel m;
        m.family = stpp::parse_covariance_family(lgcp_family);
        m.sigma = lgcp_sigma;
        m.alpha = lgcp_alpha;
        m.beta = lgcp_beta;
        stpp::LgcpSimOptions so;
        so.window = dom.window;
        so.interval = dom.interval;
        so.grid = parse_dims(lgcp_grid, "--grid");
        p = stpp::sim_lgcp(m, lgcp_lambda0, run.seed, so);
      }
      {
        auto out = run.open("pattern.csv");
        stpp::io::write_pattern_csv(out, p);
      }
      info["n"] = p.size();
      run.write_json("simulation.json", info);
    } else if (cov->parsed()) {
      run.command = "covariate";
      run.input(samples);
      stpp::IdwOptions o;
      o.power = cov_power;
      o.mult = cov_mult;
      o.name = cov_name;
      if (!cov_dims.empty()) o.dims = parse_dims(cov_dims, "--dims");
      if (!cov_window.empty()) {
        const auto w = parse_list(cov_window, 4, "--window");
        o.window = stpp::SpatialWindow{w[0], w[1], w[2], w[3]};
      }
      if (!cov_time.empty()) {
        const auto t = parse_list(cov_time, 2, "--time");
        o.interval = stpp::TimeInterval{t[0], t[1]};
      }
      stpp::IdwReport rep;
      const auto grid = stpp::interpolate_idw(stpp::read_samples_csv(samples), o, &rep);
      {
        auto out = run.open("covariate.csv");
        stpp::write_grid_csv(out, grid);
      }
      run.write_json("covariate.json", {{"name", grid.name},
                                        {"dims", grid.dims},
                                        {"duplicate_sites", rep.duplicate_sites},
                                        {"conflicting_sites", rep.conflicting_sites}});
      if (svg) {
        const auto k = grid.dims[2] / 2;
        Eigen::MatrixXd slice(static_cast<Eigen::Index>(grid.dims[0]), static_cast<Eigen::Index>(grid.dims[1]));
        std::vector<double> xs, ys;
        for (std::size_t i = 0; i < grid.dims[0]; ++i) xs.push_back(grid.node(i, 0, k)[0]);
        for (std::size_t j = 0; j < grid.dims[1]; ++j) ys.push_back(grid.node(0, j, k)[1]);
        for (std::size_t i = 0; i < grid.dims[0]; ++i)
          for (std::size_t j = 0; j < grid.dims[1]; ++j)
            slice(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = grid.at(i, j, k);
        run.write_text("covariate.svg", stpp::svg::heatmap(slice, xs, ys, grid.name + " at middle time slice", "x", "y"));
      }
    } else if (summ->parsed()) {
      const auto p = pin.load(run);
      std::vector<double> lambda;
      if (!intensity_path.empty()) {
        run.input(intensity_path);
        lambda = stpp::io::read_values(intensity_path);
      } else {
        lambda.assign(p.size(), static_cast<double>(p.size()) / p.volume());
      }
      const auto cfg = summary_config(p, parse_stat(stat), r_grid, h_grid, normalize);
      if (summ_global->parsed()) {
        run.command = "summary global";
        const auto s = stpp::second_order_global(p, lambda, cfg);
        {
          auto out = run.open("ksurface.csv");
          stpp::write_surface_csv(out, s);
        }
        emit_surface_svg(run, "ksurface.svg", s, stat + " surface");
      } else {
        run.command = "summary local";
        std::optional<std::vector<std::size_t>> ids;
        if (!lista_ids.empty()) {
          ids.emplace();
          for (auto id : lista_ids) {
            if (id == 0) throw UsageError("--ids are 1-based");
            ids->push_back(id - 1);
          }
        }
        const auto set = stpp::second_order_local(p, lambda, cfg, ids);
        {
          auto out = run.open("lista.csv");
          stpp::write_lista_csv(out, set);
        }
        if (svg)
          for (std::size_t k = 0; k < set.ids.size(); ++k)
            emit_surface_svg(run, "lista_" + std::to_string(set.ids[k] + 1) + ".svg", set.surfaces[k],
                             "event " + std::to_string(set.ids[k] + 1));
      }
    } else if (fit->parsed()) {
      const auto p = pin.load(run);
      const auto covs = load_covariates(run, cov_specs);
      std::optional<std::array<std::size_t, 3>> ndims;
      if (!nd.empty()) ndims = parse_dims(nd, "--nd");
      std::vector<double> fitted;
      ordered_json j;
      if (fit_pois->parsed()) {
        run.command = "fit poisson";
        stpp::FitOptions o;
        if (method == "glm") o.method = stpp::FitMethod::glm;
        else if (method == "lsr") o.method = stpp::FitMethod::lsr;
        else throw UsageError("--method must be glm or lsr");
        o.nd = ndims;
        o.seed = run.seed;
        o.covariates = covs;
        o.marked = marked;
        o.type_mark = type_mark;
        o.ridge = ridge;
        const auto m = stpp::stppm(p, stpp::parse_formula(formula), o);
        for (const auto& w : m.quadrature.warnings) std::cerr << "warning: " << w << "\n";
        j = model_json(m);
        fitted = m.fitted;
      } else if (fit_sep->parsed()) {
        run.command = "fit separable";
        stpp::SeparableOptions o;
        o.nd = ndims;
        o.seed = run.seed;
        o.covariates = covs;
        const auto f = stpp::sep_fit(p, space_formula, time_formula, o);
        j["model"] = "separable-poisson";
        j["space"] = {{"formula", f.space.formula.to_string()}, {"coefficients", named(f.space.names, f.space.coef)}};
        j["time"] = {{"formula", f.time.formula.to_string()}, {"coefficients", named(f.time.names, f.time.coef)}};
        j["normalization"] = f.normalization;
        fitted = f.fitted;
      } else if (fit_loc->parsed()) {
        run.command = "fit local-poisson";
        stpp::LocalFitOptions o;
        o.nd = ndims;
        o.seed = run.seed;
        o.covariates = covs;
        o.h_space = h_space;
        o.h_time = h_time;
        const auto f = stpp::locstppm(p, formula, o);
        j["model"] = "local-poisson";
        j["formula"] = f.global.formula.to_string();
        j["names"] = f.names;
        j["h_space"] = f.h_space;
        j["h_time"] = f.h_time;
        j["global_coefficients"] = vec_json(f.global.coef);
        j["local_coefficients"] = matrix_rows(f.coef);
        std::vector<bool> ok(f.converged.begin(), f.converged.end());
        j["converged"] = ok;
        fitted = f.fitted;
      } else {
        run.command = "fit lgcp";
        stpp::LgcpOptions o;
        if (first != "global" && first != "local") throw UsageError("--first must be global or local");
        if (second != "global" && second != "local") throw UsageError("--second must be global or local");
        o.first = first == "global" ? stpp::Order::global : stpp::Order::local;
        o.second = second == "global" ? stpp::Order::global : stpp::Order::local;
        o.family.family = stpp::parse_covariance_family(family);
        o.nd = ndims;
        o.seed = run.seed;
        o.covariates = covs;
        o.h_space = h_space;
        o.h_time = h_time;
        const auto f = stpp::stlgcppm(p, formula, o);
        std::cerr << "elapsed: " << f.elapsed_seconds << " s\n";
        j["model"] = "lgcp";
        j["formula"] = formula;
        j["first"] = first;
        j["second"] = second;
        j["family"] = stpp::to_string(f.family);
        j["names"] = f.names;
        j["coefficients"] = vec_json(f.coef);
        if (o.first == stpp::Order::local) j["local_coefficients"] = matrix_rows(f.coef_local);
        if (o.second == stpp::Order::global) {
          j["parameters"] = {{"sigma", f.params[0]}, {"alpha", f.params[1]}, {"beta", f.params[2]}};
          j["contrast"] = f.contrast;
          j["boundary"] = f.boundary;
        } else {
          j["parameter_names"] = {"sigma", "alpha", "beta"};
          j["local_parameters"] = matrix_rows(f.params_local);
          ordered_json c = ordered_json::array();
          for (double v : f.contrast_local) c.push_back(num(v));
          j["local_contrast"] = c;
        }
        fitted = f.intensity;
        auto out = run.open("pcf.csv");
        stpp::write_surface_csv(out, f.pcf);
      }
      run.write_json("model.json", j);
      write_values(run, "intensity.csv", "lambda", fitted);
    } else if (diag->parsed()) {
      const auto p = pin.load(run);
      run.input(intensity_path);
      const auto lambda = stpp::io::read_values(intensity_path);
      const auto cfg = summary_config(p, stpp::Statistic::K, r_grid, h_grid, false);
      if (diag_global->parsed()) {
        run.command = "diagnose global";
        const auto d = stpp::globaldiag(p, lambda, cfg);
        {
          auto out = run.open("ksurface.csv");
          stpp::write_surface_csv(out, d.surface);
        }
        run.write_json("diag.json", {{"sum_squared_differences", d.sum_squared}, {"n", p.size()}});
        emit_surface_svg(run, "ksurface.svg", d.surface, "K surface weighted by the fitted intensity");
      } else {
        run.command = "diagnose local";
        const auto d = stpp::localdiag(p, lambda, percentile, cfg);
        std::vector<std::size_t> flagged;
        for (auto i : d.flagged) flagged.push_back(i + 1);
        run.write_json("diag.json", {{"p", d.p}, {"threshold", d.threshold}, {"flagged", flagged}, {"scores", d.scores}});
        for (const auto& s : stpp::infl(d)) {
          const std::string base = "infl_" + std::to_string(s.id + 1);
          {
            auto out = run.open(base + ".csv");
            stpp::write_surface_csv(out, s.surface);
          }
          emit_surface_svg(run, base + ".svg", s.surface, "event " + std::to_string(s.id + 1));
        }
      }
    } else if (test_local->parsed()) {
      run.command = "test local";
      const auto X = pin.load(run);
      // Z shares the background's domain.
      stpp::PatternOptions po;
      po.window = X.window();
      po.interval = X.interval();
      po.network = X.network();
      run.input(zin.pattern);
      const auto Z = stpp::io::read_pattern_csv(zin.pattern, po);
      stpp::LocalTestOptions o;
      o.method = parse_stat(test_method);
      o.k = perms;
      o.alpha = alpha;
      o.seed = run.seed;
      if (!r_grid.empty() || !h_grid.empty()) o.summary = summary_config(X, o.method, r_grid, h_grid, false);
      const auto res = stpp::localtest(X, Z, o);
      for (const auto& w : res.warnings) std::cerr << "warning: " << w << "\n";
      std::vector<std::size_t> sig;
      for (auto i : res.significant) sig.push_back(i + 1);
      run.write_json("test.json", {{"background_n", res.n_x},
                                   {"alternative_n", res.n_z},
                                   {"method", test_method},
                                   {"k", res.k},
                                   {"alpha", res.alpha},
                                   {"p_values", res.p_values},
                                   {"significant", sig},
                                   {"warnings", res.warnings}});
      std::cout << "Background pattern X: " << res.n_x << "\nAlternative pattern Z: " << res.n_z << "\n"
                << sig.size() << " significant points at alpha = " << res.alpha << "\n";
    }
    run.manifest();
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
