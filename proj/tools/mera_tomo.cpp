// mera_tomo: command-line front end.
//
//   mera_tomo prepare-state --model ising-critical --n 12 --output psi.tns
//   mera_tomo tomograph     --state psi.tns --output run/
//   mera_tomo conditioning  --model ising-critical --n 16 --output s.csv
//   mera_tomo budget        --n_values 8,12,16 --S 6 --output budget.csv
//   mera_tomo certify       --circuit run/circuit --report run/report.json --output cert.json
//
// Every command takes --config FILE (a JSON object) and one flag per config
// key; flags override the file. Invalid configurations exit with status 2.

#include <fstream>
#include <iostream>
#include <map>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "mera/certificate.hpp"
#include "mera/circuit_io.hpp"
#include "mera/config.hpp"
#include "mera/state_prep.hpp"
#include "mera/tensor_io.hpp"
#include "mera/tomography.hpp"

using namespace mera;
namespace fs = std::filesystem;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::trunc);
    if (!os) throw Error("cannot write " + tmp.string());
    os << text;
  }
  fs::rename(tmp, path);
}

nlohmann::json read_json(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw ValidationError("cannot open " + path.string());
  try {
    return nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

CVector load_state(const fs::path& path) {
  const CTensor t = load_tensor(path).tensor;
  if (t.rank() != 1) throw ValidationError(path.string() + " does not hold a state vector");
  CVector v = to_vector(t);
  if (std::abs(v.norm() - 1) > 1e-8) throw ValidationError(path.string() + " holds an unnormalized state");
  return v;
}

TomographyConfig tomography_config(const RunConfig& rc) {
  TomographyConfig cfg;
  cfg.chi = rc.get<std::size_t>("chi");
  cfg.mode = rc.get<std::string>("mode") == "exact" ? MeasurementMode::exact : MeasurementMode::sampled;
  cfg.shots = rc.get<std::uint64_t>("shots");
  cfg.M0 = rc.get<std::size_t>("M0");
  cfg.seed = rc.get<std::uint64_t>("seed");
  cfg.max_sweeps = rc.get<std::size_t>("max_sweeps");
  cfg.sweep_tol = rc.get<double>("sweep_tol");
  cfg.gradient_tol = rc.get<double>("gradient_tol");
  cfg.random_init = rc.get<bool>("random_init");
  cfg.restarts = rc.get<std::size_t>("restarts");
  cfg.route = rc.get<std::string>("route") == "basis" ? BlockRoute::basis : BlockRoute::renormalized;
  return cfg;
}

// Trace-norm factors of every level, or nothing when a level has no basis.
std::optional<std::vector<double>> factors_for(const MeraCircuit& c, FactorForm form, std::string& why) {
  try {
    BasisOptions opt;
    opt.window = CandidateWindow::confined;
    BasisBuilder bb(c, 0, opt);
    std::vector<double> f;
    for (const auto& lf : level_factors(bb, c, form)) f.push_back(lf.max);
    return f;
  } catch (const Error& e) {
    why = e.what();
    return std::nullopt;
  }
}

nlohmann::json certificate_json(const Certificate& cert, const std::string& why) {
  nlohmann::json j = to_json(cert);
  if (!cert.reconstruction_bound) j["reconstruction_bound_unavailable"] = why;
  return j;
}

// ---------------------------------------------------------------------------
// Commands

int prepare_state(const RunConfig& rc) {
  const std::string model = rc.get<std::string>("model");
  const std::size_t n = rc.get<std::size_t>("n");
  const std::uint64_t seed = rc.get<std::uint64_t>("seed");
  const Geometry g = geometry_from_string(rc.get<std::string>("geometry"));
  nlohmann::json meta{{"model", model}, {"n", n}, {"seed", seed}};
  CTensor psi;
  if (model == "ising-critical" || model == "xx") {
    const GroundState gs = ground_state({model_from_string(model), n});
    psi = gs.state;
    meta["energy"] = gs.energy;
    meta["residual"] = gs.residual;
    meta["gap"] = gs.gap;
    meta["degenerate"] = gs.degenerate;
  } else if (model == "random-mera" || model == "identity-mera") {
    const MeraCircuit c = model == "random-mera" ? random_mera(n, g, rc.get<std::size_t>("chi"), seed)
                                                 : identity_mera(n, g, rc.get<std::size_t>("chi"));
    psi = evaluate_state(c);
    meta["geometry"] = to_string(g);
    meta["layers"] = c.layers.size();
  } else {
    psi = haar_random_state(n, seed);
  }
  const double delta = rc.get<double>("delta");
  if (delta > 0) {
    psi = perturbed_state(psi, delta, seed ^ 0x9e3779b97f4a7c15ULL);
    meta["delta"] = delta;
  }
  save_tensor(rc.get<std::string>("output"), psi, meta);
  std::cout << "wrote " << rc.get<std::string>("output") << " (" << n << " qubits, " << model << ")\n";
  return 0;
}

int tomograph_cmd(const RunConfig& rc) {
  const CVector psi = load_state(rc.get<std::string>("state"));
  const Geometry g = geometry_from_string(rc.get<std::string>("geometry"));
  const TomographyConfig cfg = tomography_config(rc);
  const TomographyResult r = tomograph(psi, g, cfg);
  const fs::path out = rc.get<std::string>("output");
  save_circuit(out / "circuit", r.circuit);
  write_text(out / "report.json", to_json(r.report).dump(2) + "\n");

  const FactorForm form = factor_form_from_string(rc.get<std::string>("factor_form"));
  std::string why;
  Certificate cert = certificate(r.report, factors_for(r.circuit, form, why), form);
  verify(cert, from_vector(psi), evaluate_state(r.circuit));
  write_text(out / "certificate.json", certificate_json(cert, why).dump(2) + "\n");
  const std::string label = rc.get<std::string>("label");
  write_text(out / "certificate.csv", std::string(certificate_csv_header()) + "\n" +
                                          certificate_csv_row(label.empty() ? "run" : label, cert) + "\n");
  nlohmann::json summary{{"qubits", qubit_count(static_cast<std::size_t>(psi.size()))},
                         {"geometry", to_string(g)},
                         {"mode", to_string(cfg.mode)},
                         {"route", to_string(g == Geometry::ternary ? BlockRoute::renormalized : cfg.route)},
                         {"shots", r.shots},
                         {"infidelity", cert.truth->infidelity}};
  write_text(out / "summary.json", summary.dump(2) + "\n");
  std::cout << "infidelity " << cert.truth->infidelity << ", fidelity bound " << cert.fidelity_bound
            << ", trace bound " << cert.trace_bound << "\n";
  return 0;
}

int conditioning_cmd(const RunConfig& rc) {
  const std::string model = rc.get<std::string>("model");
  const std::size_t n = rc.get<std::size_t>("n");
  const Geometry g = geometry_from_string(rc.get<std::string>("geometry"));
  if (g != Geometry::binary) throw ValidationError("conditioning profiles need the binary geometry");
  const std::size_t M0 = rc.get<std::size_t>("M0");
  const std::size_t seeds = rc.get<std::size_t>("seeds"), first = rc.get<std::size_t>("seed");
  BasisOptions opt;
  opt.window = rc.get<std::string>("window") == "confined" ? CandidateWindow::confined : CandidateWindow::isometry_inputs;
  const std::size_t max_level = rc.get<std::size_t>("max_level");

  std::optional<CVector> target;
  if (model == "ising-critical" || model == "xx") target = to_vector(ground_state({model_from_string(model), n}).state);
  if (model == "haar") throw ValidationError("conditioning: haar states have no MERA to profile");

  std::ostringstream csv;
  csv.precision(10);
  csv << "model,n,seed,window,from_level,to_level,S,infidelity\n";
  for (std::size_t s = first; s < first + seeds; ++s) {
    MeraCircuit c;
    double infidelity = 0;
    if (target) {
      TomographyConfig cfg = tomography_config(rc);
      cfg.seed = s;
      const auto r = tomograph(*target, g, cfg);
      c = r.circuit;
      infidelity = 1 - std::norm(target->dot(to_vector(evaluate_state(c))));
    } else {
      c = model == "random-mera" ? random_mera(n, g, rc.get<std::size_t>("chi"), s) : identity_mera(n, g);
    }
    const ConditioningProfile p = conditioning_profile(c, M0, max_level, opt);
    for (std::size_t l = 0; l < p.S.size(); ++l)
      csv << model << ',' << n << ',' << s << ',' << to_string(opt.window) << ",0," << l + 1 << ',' << p.S[l] << ','
          << infidelity << '\n';
    if (p.S.size() >= 2) {
      csv << model << ',' << n << ',' << s << ',' << to_string(opt.window) << ",1,2," << p.S12 << ',' << infidelity
          << '\n';
      csv << model << ',' << n << ',' << s << ",two-level,0,2," << two_level_conditioning(c, M0) << ',' << infidelity
          << '\n';
    }
    std::cout << "seed " << s << ": S_0->1 = " << (p.S.empty() ? 0.0 : p.S[0]) << "\n";
  }
  write_text(rc.get<std::string>("output"), csv.str());
  return 0;
}

int budget_cmd(const RunConfig& rc) {
  const std::size_t M0 = rc.get<std::size_t>("M0");
  const double S = rc.get<double>("S"), lambda = rc.get<double>("lambda");
  std::ostringstream csv;
  csv.precision(12);
  csv << "n,mode,factor,M0,N\n";
  for (std::size_t n : rc.get<std::vector<std::size_t>>("n_values")) {
    csv << n << ",brute-force,," << M0 << ',' << total_budget(n, BudgetMode::brute_force, 0, M0) << '\n';
    const auto bin = valid_sizes(Geometry::binary, n);
    if (std::find(bin.begin(), bin.end(), n) != bin.end() && decompose(n, Geometry::binary).layers >= 2)
      csv << n << ",binary," << S << ',' << M0 << ',' << total_budget(n, BudgetMode::binary, S, M0) << '\n';
    const auto ter = valid_sizes(Geometry::ternary, n);
    if (std::find(ter.begin(), ter.end(), n) != ter.end())
      csv << n << ",ternary-naive," << lambda << ',' << M0 << ',' << total_budget(n, BudgetMode::ternary_naive, lambda, M0)
          << '\n';
  }
  write_text(rc.get<std::string>("output"), csv.str());
  std::cout << csv.str();
  return 0;
}

int certify_cmd(const RunConfig& rc) {
  const MeraCircuit c = load_circuit(rc.get<std::string>("circuit"));
  const TruncationReport report = truncation_report_from_json(read_json(rc.get<std::string>("report")));
  if (report.layers.size() != c.layers.size())
    throw ValidationError("certify: report has " + std::to_string(report.layers.size()) + " layers, circuit has " +
                          std::to_string(c.layers.size()));
  const FactorForm form = factor_form_from_string(rc.get<std::string>("factor_form"));
  std::string why;
  Certificate cert = certificate(report, factors_for(c, form, why), form);
  if (rc.has("truth")) {
    const CVector truth = load_state(rc.get<std::string>("truth"));
    verify(cert, from_vector(truth), evaluate_state(c));
  }
  const fs::path out = rc.get<std::string>("output");
  write_text(out, certificate_json(cert, why).dump(2) + "\n");
  fs::path csv = out;
  csv.replace_extension(".csv");
  const std::string label = rc.get<std::string>("label");
  write_text(csv, std::string(certificate_csv_header()) + "\n" +
                      certificate_csv_row(label.empty() ? "run" : label, cert) + "\n");
  std::cout << "fidelity bound " << cert.fidelity_bound << ", trace bound " << cert.trace_bound << ", combined "
            << cert.combined_bound << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"MERA tomography: state preparation, reconstruction, conditioning, budgets and certificates"};
  app.require_subcommand(1);
  const std::map<std::string, std::function<int(const RunConfig&)>> handlers{
      {"prepare-state", prepare_state}, {"tomograph", tomograph_cmd}, {"conditioning", conditioning_cmd},
      {"budget", budget_cmd},           {"certify", certify_cmd}};

  struct Parsed {
    std::string config_file;
    std::map<std::string, std::string> flags;
  };
  std::map<std::string, Parsed> parsed;
  for (const auto& name : command_names()) {
    CLI::App* sub = app.add_subcommand(name);
    Parsed& p = parsed[name];
    sub->add_option("--config", p.config_file, "JSON config file")->check(CLI::ExistingFile);
    for (const auto& key : config_schema())
      if (key.commands.count(name)) sub->add_option("--" + key.name, p.flags[key.name], key.help);
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  for (CLI::App* sub : app.get_subcommands()) {
    const std::string name = sub->get_name();
    try {
      nlohmann::json doc = nlohmann::json::object();
      if (!parsed[name].config_file.empty()) doc = read_json(parsed[name].config_file);
      if (!doc.is_object()) throw ValidationError("config: expected a JSON object");
      for (const auto& [key, text] : parsed[name].flags)
        if (sub->count("--" + key)) doc[key] = parse_flag_value(key, text);
      const RunConfig rc = validate_config(name, doc);
      return handlers.at(name)(rc);
    } catch (const ValidationError& e) {
      std::cerr << "error: " << e.what() << "\n";
      return 2;
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << "\n";
      return 1;
    }
  }
  return 0;
}
