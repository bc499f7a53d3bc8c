#include "cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <random>
#include <sstream>

#include "debye/layerpot.hpp"
#include "debye/rootfinder.hpp"
#include "debye/solver.hpp"
#include "debye/specfun.hpp"
#include "debye/sphere_ops.hpp"
#include "debye/surface.hpp"

namespace debye::cli {

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr const char* kVersion = "0.1.0";

// ---------------------------------------------------------------- schema

enum class Kind { Number, Integer, String, NumberArray, IntegerArray, Object };

const char* kind_name(Kind k) {
  switch (k) {
    case Kind::Number: return "a number";
    case Kind::Integer: return "an integer";
    case Kind::String: return "a string";
    case Kind::NumberArray: return "an array of numbers";
    case Kind::IntegerArray: return "an array of integers";
    case Kind::Object: return "an object";
  }
  return "";
}

const std::map<std::string, Kind>& field_kinds() {
  static const std::map<std::string, Kind> m = {
      {"out", Kind::String},        {"seed", Kind::Integer},        {"tolerance", Kind::Number},
      {"surface", Kind::String},    {"R", Kind::Number},            {"r", Kind::Number},
      {"res", Kind::Integer},       {"k", Kind::Number},            {"k_values", Kind::NumberArray},
      {"kmin", Kind::Number},       {"kmax", Kind::Number},         {"nk", Kind::Integer},
      {"lmin", Kind::Integer},      {"lmax", Kind::Integer},        {"l_values", Kind::IntegerArray},
      {"count", Kind::Integer},     {"region", Kind::Object},       {"incident", Kind::Object},
      {"npoints", Kind::Integer},   {"eps", Kind::NumberArray},     {"samples", Kind::Integer},
      {"upsample", Kind::Integer},  {"band", Kind::Integer},        {"decoupling_tolerance", Kind::Number},
      {"max_condition", Kind::Number},
  };
  return m;
}

const std::map<std::string, std::vector<std::string>>& command_fields() {
  static const std::map<std::string, std::vector<std::string>> m = {
      {"multipliers", {"k", "k_values", "kmin", "kmax", "nk", "lmin", "lmax"}},
      {"roots", {"l_values", "count", "region"}},
      {"sphere-scatter", {"k", "lmax", "incident", "npoints", "tolerance", "seed"}},
      {"pec", {"surface", "R", "r", "res", "k", "incident", "npoints", "tolerance", "seed", "max_condition"}},
      {"kneumann", {"surface", "R", "r", "res", "k", "tolerance", "decoupling_tolerance", "max_condition"}},
      {"jump-test", {"surface", "R", "r", "res", "k", "eps", "samples", "upsample", "band", "tolerance", "seed"}},
      {"lowfreq", {"surface", "R", "r", "res", "k", "tolerance", "seed"}},
      {"nystrom-validate", {"res", "k", "k_values", "kmin", "kmax", "nk", "lmax", "tolerance"}},
  };
  return m;
}

bool matches(const json& v, Kind k) {
  auto is_num = [](const json& x) { return x.is_number(); };
  auto is_int = [](const json& x) {
    return x.is_number_integer() || (x.is_number_float() && std::floor(x.get<double>()) == x.get<double>());
  };
  switch (k) {
    case Kind::Number: return is_num(v);
    case Kind::Integer: return is_int(v);
    case Kind::String: return v.is_string();
    case Kind::Object: return v.is_object();
    case Kind::NumberArray: return v.is_array() && std::all_of(v.begin(), v.end(), is_num);
    case Kind::IntegerArray: return v.is_array() && std::all_of(v.begin(), v.end(), is_int);
  }
  return false;
}

int line_of(const std::string& text, size_t byte) {
  byte = std::min(byte, text.size());
  return 1 + int(std::count(text.begin(), text.begin() + long(byte), '\n'));
}

// Where a field is set, for diagnostics.
std::string where(const std::string& field, const std::string& text, bool from_flag) {
  if (from_flag) return "flag --" + field;
  size_t pos = text.find("\"" + field + "\"");
  if (pos == std::string::npos) return "field '" + field + "'";
  return "line " + std::to_string(line_of(text, pos)) + ", field '" + field + "'";
}

[[noreturn]] void fail(const std::string& field, const std::string& msg, const std::string& text, bool from_flag) {
  throw ConfigError(where(field, text, from_flag) + ": " + msg);
}

std::vector<double> linspace(double a, double b, int n) {
  std::vector<double> v(n);
  for (int i = 0; i < n; ++i) v[i] = n == 1 ? a : a + (b - a) * i / (n - 1);
  return v;
}

Vec3 vec3_of(const json& j, const std::string& field, const std::string& text) {
  if (!matches(j, Kind::NumberArray) || j.size() != 3) fail(field, "expected an array of 3 numbers", text, false);
  return Vec3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

// ---------------------------------------------------------------- output

struct Timer {
  using clock = std::chrono::steady_clock;
  clock::time_point t0 = clock::now(), last = t0;
  json laps = json::object();
  void lap(const std::string& name) {
    auto now = clock::now();
    laps[name + "_s"] = std::chrono::duration<double>(now - last).count();
    last = now;
  }
  json finish() {
    laps["total_s"] = std::chrono::duration<double>(clock::now() - t0).count();
    return laps;
  }
};

class Csv {
 public:
  Csv(const fs::path& path, const std::vector<std::string>& header) : out_(path) {
    if (!out_) throw std::runtime_error("cannot write " + path.string());
    for (size_t i = 0; i < header.size(); ++i) out_ << (i ? "," : "") << header[i];
    out_ << "\n";
  }
  void row(const std::vector<double>& v) {
    for (size_t i = 0; i < v.size(); ++i) out_ << (i ? "," : "") << fmt(v[i]);
    out_ << "\n";
  }

 private:
  std::ofstream out_;
};

void write_json(const fs::path& path, const json& j) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << j.dump(2) << "\n";
}

std::vector<std::string> field_header() {
  return {"x", "y", "z", "re_Ex", "im_Ex", "re_Ey", "im_Ey", "re_Ez", "im_Ez",
          "re_Hx", "im_Hx", "re_Hy", "im_Hy", "re_Hz", "im_Hz"};
}

void field_row(Csv& csv, const Vec3& x, const FieldEH& f) {
  std::vector<double> row{x(0), x(1), x(2)};
  for (const CVec3* v : {&f.E, &f.H})
    for (int a = 0; a < 3; ++a) {
      row.push_back((*v)(a).real());
      row.push_back((*v)(a).imag());
    }
  csv.row(row);
}

// Sample ring for scattered-field output.
std::vector<Vec3> sample_ring(const json& cfg) {
  std::vector<Vec3> pts;
  const int n = 64;
  bool torus = cfg.value("surface", "sphere") == "torus";
  double R = cfg.value("R", 2.0), r = cfg.value("r", 0.5);
  for (int i = 0; i < n; ++i) {
    double t = 2.0 * PI * i / n;
    if (torus)
      pts.emplace_back((R + r + 1.0) * std::cos(t), (R + r + 1.0) * std::sin(t), 0.3);
    else
      pts.emplace_back(2.0 * std::sin(t), 0.0, 2.0 * std::cos(t));
  }
  return pts;
}

// ---------------------------------------------------------------- commands

struct Outcome {
  json report = json::object();
  std::vector<std::string> outputs;
  bool pass = true;
};

surf::SurfacePtr make_surface(const json& cfg) {
  if (cfg["surface"] == "torus") {
    int n = cfg["res"].get<int>();
    return surf::make_torus(cfg["R"].get<double>(), cfg["r"].get<double>(), n, n);
  }
  return surf::make_sphere(cfg["res"].get<int>());
}

FieldFn make_incident(const json& inc, cplx k) {
  std::string type = inc["type"];
  if (type == "zero") return [](const Vec3&) { return FieldEH{CVec3::Zero(), CVec3::Zero()}; };
  Vec3 a = vec3_of(inc.at(type == "plane_wave" ? "direction" : "position"), "incident", "");
  Vec3 b = vec3_of(inc.at(type == "plane_wave" ? "polarization" : "moment"), "incident", "");
  if (type == "plane_wave") return solve::plane_wave(k, a, b.cast<cplx>());
  return solve::electric_dipole(k, a, b.cast<cplx>());
}

Outcome cmd_multipliers(const json& cfg, const fs::path& out) {
  Outcome o;
  Csv csv(out / "multipliers.csv", {"k", "l", "re_mn", "im_mn", "abs_mn", "re_mt", "im_mt", "abs_mt"});
  int rows = 0;
  for (double k : cfg["k_values"].get<std::vector<double>>())
    for (int l = cfg["lmin"].get<int>(); l <= cfg["lmax"].get<int>(); ++l) {
      cplx mn = sphere::multiplier_normal(k, l), mt = sphere::multiplier_tangential(k, l);
      csv.row({k, double(l), mn.real(), mn.imag(), std::abs(mn), mt.real(), mt.imag(), std::abs(mt)});
      ++rows;
    }
  o.outputs.push_back("multipliers.csv");
  o.report["rows"] = rows;
  return o;
}

double correlation(const std::vector<double>& x, const std::vector<double>& y) {
  const size_t n = x.size();
  if (n < 2) return 0.0;
  double mx = 0, my = 0;
  for (size_t i = 0; i < n; ++i) mx += x[i] / n, my += y[i] / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (size_t i = 0; i < n; ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  return sxx > 0 && syy > 0 ? sxy / std::sqrt(sxx * syy) : 0.0;
}

Outcome cmd_roots(const json& cfg, const fs::path& out) {
  Outcome o;
  const json& rg = cfg["region"];
  roots::SearchRegion region;
  region.re_min = rg["re_min"];
  region.re_max = rg["re_max"];
  region.im_min = rg["im_min"];
  region.im_max = rg["im_max"];
  const size_t count = cfg["count"].get<size_t>();
  struct Row {
    int l, index;
    cplx z;
    bool hankel;
  };
  std::vector<Row> rows;
  json per_l = json::array();
  for (int l : cfg["l_values"].get<std::vector<int>>()) {
    auto zs = roots::find_roots([l](cplx k) { return sphere::multiplier_normal(k, l); }, region);
    std::sort(zs.begin(), zs.end(), [](cplx a, cplx b) { return std::abs(a) < std::abs(b); });
    if (zs.size() > count) zs.resize(count);
    std::vector<double> xa, ya, xr, yr;
    for (size_t i = 0; i < zs.size(); ++i) {
      bool h = roots::is_hankel_root(zs[i], l);
      rows.push_back({l, int(i), zs[i], h});
      if (zs[i].real() > 0) {
        xa.push_back(-0.5 * std::log(zs[i].real()));
        ya.push_back(zs[i].imag());
        if (!h) {
          xr.push_back(xa.back());
          yr.push_back(ya.back());
        }
      }
    }
    per_l.push_back({{"l", l},
                     {"found", zs.size()},
                     {"log_fit_correlation_all", correlation(xa, ya)},
                     {"log_fit_correlation_resonance", correlation(xr, yr)}});
  }
  double max_im = -std::numeric_limits<double>::infinity();
  for (const Row& r : rows) max_im = std::max(max_im, r.z.imag());
  o.report["per_l"] = per_l;
  o.report["max_imag"] = rows.empty() ? 0.0 : max_im;
  o.pass = rows.empty() || max_im < 0.0;
  if (!o.pass) return o;
  Csv csv(out / "roots.csv", {"l", "index", "re_k", "im_k", "abs_k", "hankel"});
  for (const Row& r : rows) csv.row({double(r.l), double(r.index), r.z.real(), r.z.imag(), std::abs(r.z), r.hankel ? 1.0 : 0.0});
  o.outputs.push_back("roots.csv");
  return o;
}

Outcome cmd_sphere_scatter(const json& cfg, const fs::path& out, Timer& timer) {
  Outcome o;
  const double k = cfg["k"];
  FieldFn inc = make_incident(cfg["incident"], k);
  sphere::SpherePec res = sphere::solve_pec_sphere(inc, k, cfg["lmax"], cfg["npoints"], cfg["seed"]);
  timer.lap("solve");
  sphere::MieCoeffs mie = sphere::debye_to_mie(res.solution);
  Csv fields(out / "fields.csv", field_header());
  for (const Vec3& x : sample_ring(cfg)) field_row(fields, x, sphere::eval_field_sphere(mie, x));
  Csv coef(out / "debye_coefficients.csv", {"l", "m", "re_r", "im_r", "re_q", "im_q"});
  for (int l = 1; l <= res.solution.a.lmax(); ++l)
    for (int m = -l; m <= l; ++m) {
      cplx a = res.solution.a(l, m), b = res.solution.b(l, m);
      coef.row({double(l), double(m), a.real(), a.imag(), b.real(), b.imag()});
    }
  o.outputs = {"fields.csv", "debye_coefficients.csv"};
  const double tol = cfg["tolerance"];
  o.report["residuals"] = {{"pec_tan", res.tangential_E}, {"pec_norm", res.normal_H}, {"system", 0.0}};
  o.pass = res.tangential_E <= tol && res.normal_H <= tol;
  return o;
}

Outcome cmd_pec(const json& cfg, const fs::path& out, Timer& timer) {
  Outcome o;
  const double k = cfg["k"];
  auto s = make_surface(cfg);
  lp::BoundaryOps ops(s, k), g0(s, 0.0);
  timer.lap("operators");
  solve::PecSolver P(ops, g0, cfg["max_condition"]);
  timer.lap("assembly");
  solve::ScatterSolution sol = P.solve(make_incident(cfg["incident"], k));
  timer.lap("solve");
  solve::PecResidual pr = solve::pec_residual(ops, sol, cfg["npoints"], cfg["seed"]);
  lp::FieldEvaluator ev(solve::potentials(ops, sol.sources));
  Csv fields(out / "fields.csv", field_header());
  for (const Vec3& x : sample_ring(cfg)) field_row(fields, x, ev(x));
  timer.lap("evaluation");
  o.outputs = {"fields.csv"};
  o.report["residuals"] = {{"pec_tan", pr.tangential_E}, {"pec_norm", pr.normal_H}, {"system", sol.info.system_residual}};
  o.report["condition_estimate"] = sol.info.condition_estimate;
  o.report["source_norms"] = {{"r", sol.sources.r.norm()}, {"q", sol.sources.q.norm()}};
  const double tol = cfg["tolerance"];
  o.pass = pr.tangential_E <= tol && pr.normal_H <= tol;
  return o;
}

Outcome cmd_kneumann(const json& cfg, const fs::path& out, Timer& timer) {
  Outcome o;
  const double k = cfg["k"];
  auto s = make_surface(cfg);
  lp::BoundaryOps ops(s, k);
  solve::KNeumannSet kn = solve::build_k_neumann(ops, cfg["max_condition"]);
  timer.lap("solve");
  Csv csv(out / "kneumann.csv", {"index", "normal_residual"});
  double worst = 0.0;
  for (size_t l = 0; l < kn.fields.size(); ++l) {
    csv.row({double(l), kn.fields[l].normal_residual});
    worst = std::max(worst, kn.fields[l].normal_residual);
  }
  o.outputs = {"kneumann.csv"};
  const size_t expected = 2 * size_t(s->genus());
  o.report["count"] = kn.fields.size();
  o.report["expected_count"] = expected;
  o.report["max_normal_residual"] = worst;
  o.report["gram_condition"] = kn.gram_condition;
  o.report["condition_estimate"] = kn.info.condition_estimate;
  o.pass = kn.fields.size() == expected && worst <= cfg["tolerance"].get<double>();
  if (!kn.fields.empty() && k <= 1e-6) {
    std::vector<Vec3> pts;
    double R = cfg["R"], r = cfg["r"];
    for (int i = 0; i < 6; ++i) {
      double t = 2.0 * PI * i / 6;
      pts.emplace_back((R + r + 1.0) * std::cos(t), (R + r + 1.0) * std::sin(t), 0.3 * (i % 3) - 0.3);
    }
    solve::Decoupling d = solve::k_neumann_decoupling(ops, kn, pts);
    timer.lap("decoupling");
    o.report["decoupling"] = {{"e_only_ratio", d.e_only_ratio}, {"h_only_ratio", d.h_only_ratio}};
    const double dt = cfg["decoupling_tolerance"];
    o.pass = o.pass && d.e_only_ratio <= dt && d.h_only_ratio <= dt;
  }
  return o;
}

CVector random_density(const surf::Surface& s, int band, std::mt19937& rng) {
  std::normal_distribution<double> g;
  if (const auto* sp = surf::as_sphere(s)) {
    RVector a = RVector::Zero(sp->ncoeffs()), b = a;
    for (int i = 1; i < std::min(sp->ncoeffs(), (band + 1) * (band + 1)); ++i) {
      a(i) = g(rng);
      b(i) = g(rng);
    }
    CVector f(s.size());
    f.real() = sp->synthesis(a);
    f.imag() = sp->synthesis(b);
    return f;
  }
  CVector f = CVector::Zero(s.size());
  for (int a = -band; a <= band; ++a)
    for (int b = -band; b <= band; ++b) {
      cplx c(g(rng), g(rng));
      for (int i = 0; i < s.size(); ++i) f(i) += c * std::polar(1.0, a * s.chart(i)[0] + b * s.chart(i)[1]);
    }
  return surf::mean_zero_project(s, f);
}

Outcome cmd_jump_test(const json& cfg, const fs::path&, Timer& timer) {
  Outcome o;
  const double k = cfg["k"];
  auto s = make_surface(cfg);
  std::mt19937 rng(cfg["seed"].get<unsigned>());
  const int band = cfg["band"];
  CVector r = random_density(*s, band, rng), q = random_density(*s, band, rng);
  CVector hc(2 * s->genus());
  for (int i = 0; i < hc.size(); ++i) hc(i) = std::normal_distribution<double>()(rng);
  auto cur = surf::currents_from_debye(*s, r, q, k, hc);
  lp::JumpResult jr = lp::jump_test(lp::PotentialSet{s, k, r, q, cur.j, cur.m}, cfg["eps"].get<std::vector<double>>(),
                                    cfg["samples"], cfg["upsample"], cfg["seed"]);
  timer.lap("jump");
  o.report["residuals"] = {{"nE", jr.nE}, {"nH", jr.nH}, {"tE", jr.tE}, {"tH", jr.tH}};
  o.report["samples"] = jr.samples;
  const double tol = cfg["tolerance"];
  o.pass = std::max({jr.nE, jr.nH, jr.tE, jr.tH}) <= tol;
  return o;
}

Outcome cmd_lowfreq(const json& cfg, const fs::path&, Timer& timer) {
  Outcome o;
  auto s = make_surface(cfg);
  std::mt19937 rng(cfg["seed"].get<unsigned>());
  CVector f = random_density(*s, 3, rng), h = random_density(*s, 3, rng);
  std::vector<Vec3> pts;
  if (cfg["surface"] == "torus") {
    double R = cfg["R"], r = cfg["r"];
    pts = {{R + r + 1.0, 0.0, 0.2}, {0.0, -(R + r + 0.8), -0.4}, {0.0, 0.0, r + 1.0}};
  } else {
    pts = {{0.0, 0.0, 2.0}, {1.5, 0.5, -0.3}, {-1.2, 1.2, 0.4}};
  }
  solve::LowFrequencyReport rep = solve::low_frequency_limit_check(s, cfg["k"], f, h, pts);
  timer.lap("solve");
  o.report["k_small"] = rep.k_small;
  o.report["field_difference"] = rep.field_difference;
  o.report["current_ratio"] = rep.current_ratio;
  o.report["h_over_e"] = rep.h_over_e;
  if (surf::as_sphere(*s)) o.report["multiplier_error"] = rep.multiplier_error;
  o.pass = rep.field_difference <= cfg["tolerance"].get<double>() && rep.current_ratio < 1e-6;
  return o;
}

Outcome cmd_nystrom_validate(const json& cfg, const fs::path& out, Timer& timer) {
  Outcome o;
  auto s = surf::make_sphere(cfg["res"]);
  const auto& sp = *surf::as_sphere(*s);
  const int lmax = cfg["lmax"];
  if (lmax > sp.lmax()) throw ConfigError("field 'lmax': exceeds the band limit " + std::to_string(sp.lmax()) + " of the grid");
  Csv csv(out / "nystrom.csv", {"k", "l", "re_numeric", "im_numeric", "re_exact", "im_exact", "rel_error"});
  double worst = 0.0;
  for (double k : cfg["k_values"].get<std::vector<double>>()) {
    lp::BoundaryOps ops(s, k);
    CMatrix Y(s->size(), lmax);
    for (int l = 1; l <= lmax; ++l) {
      RVector a = RVector::Zero(sp.ncoeffs());
      a(surf::SphereSurface::coeff_index(l, l / 2)) = 1.0;
      Y.col(l - 1) = sp.synthesis(a).cast<cplx>();
    }
    CMatrix SY = ops.S(Y);
    for (int l = 1; l <= lmax; ++l) {
      const CVector y = Y.col(l - 1), sy = SY.col(l - 1);
      cplx lam = s->weights().cast<cplx>().cwiseProduct(y).dot(sy) / s->weights().cast<cplx>().cwiseProduct(y).dot(y);
      cplx exact = I * k * specfun::sph_bessel_j(l, k) * specfun::sph_hankel_h1(l, k);
      double err = std::max(std::abs(lam - exact), (sy - lam * y).cwiseAbs().maxCoeff() / y.cwiseAbs().maxCoeff()) /
                   std::abs(exact);
      worst = std::max(worst, err);
      csv.row({k, double(l), lam.real(), lam.imag(), exact.real(), exact.imag(), err});
    }
  }
  timer.lap("validate");
  o.outputs = {"nystrom.csv"};
  o.report["max_rel_error"] = worst;
  o.pass = worst <= cfg["tolerance"].get<double>();
  return o;
}

// ---------------------------------------------------------------- config checks

void check_ranges(const std::string& cmd, const json& c, const std::string& text, const json& flags) {
  auto bad = [&](const std::string& f, const std::string& msg) { fail(f, msg, text, flags.contains(f)); };
  auto positive = [&](const std::string& f) {
    if (c.contains(f) && !(c[f].get<double>() > 0.0)) bad(f, "must be positive");
  };
  if (c.contains("surface")) {
    std::string s = c["surface"];
    if (s != "sphere" && s != "torus") bad("surface", "must be \"sphere\" or \"torus\"");
    if (cmd == "kneumann" && s != "torus") bad("surface", "k-Neumann fields need a surface of genus >= 1 (torus)");
  }
  if (c.contains("R") || c.contains("r")) {
    if (!(c["r"].get<double>() > 0.0)) bad("r", "must be positive");
    if (!(c["R"].get<double>() > c["r"].get<double>())) bad("R", "must exceed r");
  }
  if (c.contains("res")) {
    int n = c["res"];
    bool torus = c.value("surface", "sphere") == "torus";
    if (torus && (n < 8 || n % 2)) bad("res", "torus resolution must be even and >= 8");
    if (!torus && n < 4) bad("res", "sphere resolution must be >= 4");
    if (n > 256) bad("res", "must be <= 256");
  }
  if (c.contains("k")) {
    double k = c["k"];
    if (!std::isfinite(k) || k < 0.0) bad("k", "must be finite and >= 0");
    if (k == 0.0 && cmd != "multipliers") bad("k", "must be nonzero");
    if (cmd == "lowfreq" && !(k <= 1e-6)) bad("k", "low-frequency check needs 0 < k <= 1e-6");
  }
  if (c.contains("k_values"))
    for (double k : c["k_values"].get<std::vector<double>>())
      if (!std::isfinite(k) || k < 0.0 || (k == 0.0 && cmd != "multipliers")) bad("k_values", "entries must be finite and positive");
  for (const char* f : {"tolerance", "decoupling_tolerance", "max_condition"}) positive(f);
  for (const char* f : {"npoints", "samples", "upsample", "count"})
    if (c.contains(f) && c[f].get<long>() < 1) bad(f, "must be >= 1");
  if (c.contains("lmin") && c["lmin"].get<long>() < 1) bad("lmin", "must be >= 1");
  if (c.contains("lmax") && c["lmax"].get<long>() < (cmd == "multipliers" ? 0 : 1)) bad("lmax", "must be >= 1");
  if (c.contains("lmax") && c["lmax"].get<long>() > 2000) bad("lmax", "must be <= 2000");
  if (c.contains("band") && c["band"].get<long>() < 1) bad("band", "must be >= 1");
  if (c.contains("seed") && c["seed"].get<long>() < 0) bad("seed", "must be >= 0");
  if (c.contains("l_values"))
    for (long l : c["l_values"].get<std::vector<long>>())
      if (l < 1 || l > 500) bad("l_values", "entries must be in [1, 500]");
  if (c.contains("eps")) {
    auto e = c["eps"].get<std::vector<double>>();
    if (e.size() < 2) bad("eps", "needs at least 2 offsets");
    for (double v : e)
      if (!(v > 0.0 && v < 0.5)) bad("eps", "offsets must lie in (0, 0.5)");
  }
  if (c.contains("region")) {
    const json& r = c["region"];
    for (const char* f : {"re_min", "re_max", "im_min", "im_max"})
      if (!r.contains(f) || !r[f].is_number()) bad("region", std::string("needs numeric '") + f + "'");
    if (!(r["re_min"].get<double>() < r["re_max"].get<double>() && r["im_min"].get<double>() < r["im_max"].get<double>()))
      bad("region", "needs re_min < re_max and im_min < im_max");
  }
  if (c.contains("incident")) {
    const json& inc = c["incident"];
    std::string t = inc.value("type", "");
    std::vector<std::string> keys;
    if (t == "plane_wave")
      keys = {"direction", "polarization"};
    else if (t == "dipole")
      keys = {"position", "moment"};
    else if (t != "zero")
      bad("incident", "type must be \"plane_wave\", \"dipole\" or \"zero\"");
    for (const auto& kk : keys)
      if (!inc.contains(kk) || !matches(inc[kk], Kind::NumberArray) || inc[kk].size() != 3)
        bad("incident", "'" + kk + "' must be an array of 3 numbers");
    if (t == "plane_wave" && vec3_of(inc["direction"], "incident", text).norm() == 0.0)
      bad("incident", "direction must be nonzero");
  }
}

}  // namespace

// ---------------------------------------------------------------- public helpers

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.15e", v);
  return buf;
}

std::string config_hash(const json& cfg) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : cfg.dump()) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016" PRIx64, h);
  return buf;
}

const std::vector<std::string>& command_names() {
  static const std::vector<std::string> v = {"multipliers", "roots", "sphere-scatter", "pec",
                                             "kneumann", "jump-test", "lowfreq", "nystrom-validate"};
  return v;
}

namespace {

const json kPlaneWave = {{"type", "plane_wave"}, {"direction", {0.3, -0.2, 1.0}}, {"polarization", {1.0, 0.5, 0.0}}};
const json kDipole = {{"type", "dipole"}, {"position", {4.5, 0.5, 1.2}}, {"moment", {0.2, 1.0, 0.4}}};

}  // namespace

json command_defaults(const std::string& cmd) {
  const json& plane = kPlaneWave;
  if (cmd == "multipliers") return {{"k_values", {1.0, 10.0, 100.0}}, {"lmin", 1}, {"lmax", 200}};
  if (cmd == "roots")
    return {{"l_values", {1, 5, 7}},
            {"count", 50},
            {"region", {{"re_min", 0.05}, {"re_max", 170.0}, {"im_min", -8.0}, {"im_max", -1e-6}}}};
  if (cmd == "sphere-scatter")
    return {{"k", 1.7}, {"lmax", 30}, {"incident", plane}, {"npoints", 64}, {"tolerance", 1e-10}, {"seed", 1}};
  if (cmd == "pec")
    return {{"surface", "sphere"}, {"R", 2.0}, {"r", 0.5}, {"k", 1.7}, {"incident", plane},
            {"npoints", 64},       {"tolerance", 1e-4}, {"seed", 1}, {"max_condition", 1e12}};
  if (cmd == "kneumann")
    return {{"surface", "torus"}, {"R", 2.0}, {"r", 0.5}, {"k", 1.0}, {"tolerance", 1e-5}, {"decoupling_tolerance", 1e-4},
            {"max_condition", 1e12}};
  if (cmd == "jump-test")
    return {{"surface", "torus"}, {"R", 2.0}, {"r", 0.5}, {"k", 1.0}, {"eps", {0.01, 0.015, 0.02, 0.025, 0.03}},
            {"samples", 4},       {"upsample", 4}, {"band", 2}, {"tolerance", 1e-4}, {"seed", 1}};
  if (cmd == "lowfreq")
    return {{"surface", "sphere"}, {"R", 2.0}, {"r", 0.5}, {"k", 1e-8}, {"tolerance", 1e-5}, {"seed", 1}};
  if (cmd == "nystrom-validate") return {{"res", 60}, {"k_values", {1.0, 2.0}}, {"lmax", 10}, {"tolerance", 1e-8}};
  throw ConfigError("unknown command '" + cmd + "'");
}

json parse_config_text(const std::string& text, const std::string& origin) {
  try {
    json j = json::parse(text);
    if (!j.is_object()) throw ConfigError(origin + ": line 1: top level must be a JSON object");
    return j;
  } catch (const json::parse_error& e) {
    throw ConfigError(origin + ": line " + std::to_string(line_of(text, e.byte)) + ": JSON syntax error");
  }
}

json merge_config(const std::string& cmd, const json& file_cfg, const json& flags, const std::string& text) {
  json c = command_defaults(cmd);
  const auto& allowed = command_fields().at(cmd);
  for (const json* src : {&file_cfg, &flags}) {
    const bool from_flag = src == &flags;
    for (auto it = src->begin(); it != src->end(); ++it) {
      const std::string& key = it.key();
      if (key == "out") continue;
      if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
        if (from_flag) fail(key, "not used by '" + cmd + "'", text, true);
        fail(key, "unknown field for '" + cmd + "'", text, false);
      }
      if (!matches(it.value(), field_kinds().at(key)))
        fail(key, std::string("expected ") + kind_name(field_kinds().at(key)), text, from_flag);
      c[key] = it.value();
    }
  }
  if (c.contains("surface")) {
    bool torus = c["surface"] == "torus";
    if (!c.contains("res")) c["res"] = torus ? solve::kDefaultTorusRes : solve::kDefaultSphereRes;
  }
  if (cmd == "pec" && c["surface"] == "torus" && !file_cfg.contains("incident")) c["incident"] = kDipole;
  // k range forms for multi-k commands
  if (c.contains("k_values")) {
    auto given = [&](const char* f) { return file_cfg.contains(f) || flags.contains(f); };
    if (given("kmin") || given("kmax")) {
      if (!(c.contains("kmin") && c.contains("kmax"))) fail(given("kmin") ? "kmin" : "kmax", "kmin and kmax go together", text, flags.contains("kmin") || flags.contains("kmax"));
      int nk = c.value("nk", 10);
      if (nk < 1) fail("nk", "must be >= 1", text, flags.contains("nk"));
      if (!(c["kmin"].get<double>() <= c["kmax"].get<double>())) fail("kmin", "must not exceed kmax", text, flags.contains("kmin"));
      c["k_values"] = linspace(c["kmin"], c["kmax"], nk);
    }
    if (given("k")) c["k_values"] = {c["k"]};
    for (const char* f : {"k", "kmin", "kmax", "nk"}) c.erase(f);
  }
  check_ranges(cmd, c, text, flags);
  return c;
}

int run(int argc, const char* const* argv) {
  CLI::App app{"Generalized Debye source solver for time-harmonic Maxwell scattering"};
  app.require_subcommand(1);
  std::string config_path, out_dir = "debye_out";
  app.add_option("--config", config_path, "JSON config file");
  app.add_option("--out", out_dir, "output directory");

  struct Flags {
    double k = 0, kmin = 0, kmax = 0, R = 0, r = 0, tolerance = 0;
    int lmax = 0, lmin = 0, res = 0, nk = 0, seed = 0, count = 0;
    std::string surface;
    std::vector<int> l;
  } fl;
  std::map<std::string, CLI::Option*> opts;
  std::map<std::string, CLI::App*> subs;
  auto add = [&](CLI::App* s, const std::string& name, auto& var, const std::string& help) {
    opts[s->get_name() + "/" + name] = s->add_option("--" + name, var, help);
  };
  for (const std::string& name : command_names()) {
    CLI::App* s = app.add_subcommand(name);
    s->fallthrough();
    subs[name] = s;
    const auto& f = command_fields().at(name);
    auto has = [&](const char* x) { return std::find(f.begin(), f.end(), x) != f.end(); };
    if (has("k")) add(s, "k", fl.k, "wavenumber");
    if (has("kmin")) {
      add(s, "kmin", fl.kmin, "smallest wavenumber");
      add(s, "kmax", fl.kmax, "largest wavenumber");
      add(s, "nk", fl.nk, "number of wavenumbers between kmin and kmax");
    }
    if (has("lmin")) add(s, "lmin", fl.lmin, "smallest degree");
    if (has("lmax")) add(s, "lmax", fl.lmax, "largest degree");
    if (has("l_values")) add(s, "l", fl.l, "degrees");
    if (has("count")) add(s, "count", fl.count, "roots per degree");
    if (has("surface")) {
      add(s, "surface", fl.surface, "sphere or torus");
      add(s, "R", fl.R, "torus major radius");
      add(s, "r", fl.r, "torus minor radius");
    }
    if (has("res")) add(s, "res", fl.res, "grid resolution (sphere: theta nodes; torus: nodes per direction)");
    if (has("tolerance")) add(s, "tolerance", fl.tolerance, "pass/fail tolerance");
    if (has("seed")) add(s, "seed", fl.seed, "random seed");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfig;
  }

  std::string cmd;
  for (auto& [name, s] : subs)
    if (s->parsed()) cmd = name;

  Timer timer;
  json cfg;
  try {
    std::string text;
    json file_cfg = json::object();
    if (!config_path.empty()) {
      std::ifstream f(config_path);
      if (!f) throw ConfigError(config_path + ": cannot open");
      std::stringstream ss;
      ss << f.rdbuf();
      text = ss.str();
      file_cfg = parse_config_text(text, config_path);
      if (file_cfg.contains("out") && app.count("--out") == 0) {
        if (!file_cfg["out"].is_string()) throw ConfigError(config_path + ": field 'out': expected a string");
        out_dir = file_cfg["out"];
      }
    }
    json flags = json::object();
    for (const auto& [key, opt] : opts) {
      if (key.rfind(cmd + "/", 0) != 0 || opt->count() == 0) continue;
      std::string f = key.substr(cmd.size() + 1);
      if (f == "k") flags["k"] = fl.k;
      if (f == "kmin") flags["kmin"] = fl.kmin;
      if (f == "kmax") flags["kmax"] = fl.kmax;
      if (f == "nk") flags["nk"] = fl.nk;
      if (f == "lmin") flags["lmin"] = fl.lmin;
      if (f == "lmax") flags["lmax"] = fl.lmax;
      if (f == "l") flags["l_values"] = fl.l;
      if (f == "count") flags["count"] = fl.count;
      if (f == "surface") flags["surface"] = fl.surface;
      if (f == "R") flags["R"] = fl.R;
      if (f == "r") flags["r"] = fl.r;
      if (f == "res") flags["res"] = fl.res;
      if (f == "tolerance") flags["tolerance"] = fl.tolerance;
      if (f == "seed") flags["seed"] = fl.seed;
    }
    cfg = merge_config(cmd, file_cfg, flags, text);
  } catch (const ConfigError& e) {
    std::string msg = e.what();
    if (msg.rfind("line ", 0) == 0 || msg.rfind("field ", 0) == 0) msg = config_path + ": " + msg;
    std::cerr << "config error: " << msg << "\n";
    return kConfig;
  }

  const fs::path out(out_dir);
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) {
    std::cerr << "config error: cannot create output directory " << out_dir << ": " << ec.message() << "\n";
    return kConfig;
  }

  Outcome res;
  int code = kPass;
  std::string error;
  try {
    if (cmd == "multipliers") res = cmd_multipliers(cfg, out);
    if (cmd == "roots") res = cmd_roots(cfg, out);
    if (cmd == "sphere-scatter") res = cmd_sphere_scatter(cfg, out, timer);
    if (cmd == "pec") res = cmd_pec(cfg, out, timer);
    if (cmd == "kneumann") res = cmd_kneumann(cfg, out, timer);
    if (cmd == "jump-test") res = cmd_jump_test(cfg, out, timer);
    if (cmd == "lowfreq") res = cmd_lowfreq(cfg, out, timer);
    if (cmd == "nystrom-validate") res = cmd_nystrom_validate(cfg, out, timer);
    code = res.pass ? kPass : kResidual;
  } catch (const ConditioningError& e) {
    error = e.what();
    res.report["condition_estimate"] = e.condition();
    code = kConditioning;
  } catch (const SingularMultiplierError& e) {
    error = e.what();
    code = kConditioning;
  } catch (const ConfigError& e) {
    error = e.what();
    code = kConfig;
  } catch (const std::domain_error& e) {
    error = e.what();
    code = kConfig;
  } catch (const std::invalid_argument& e) {
    error = e.what();
    code = kConfig;
  } catch (const std::exception& e) {
    error = e.what();
    code = kFailure;
  }

  json report = res.report;
  report["command"] = cmd;
  for (const char* f : {"k", "surface"})
    if (cfg.contains(f)) report[f] = cfg[f];
  if (cfg.contains("res")) report["resolution"] = cfg["res"];
  report["pass"] = code == kPass;
  if (!error.empty()) report["error"] = error;
  json timings = timer.finish();
  report["timings"] = timings;
  write_json(out / "report.json", report);

  json manifest = {{"tool", "debye-cli"},
                   {"version", kVersion},
                   {"command", cmd},
                   {"config", cfg},
                   {"config_hash", config_hash(cfg)},
                   {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                 std::to_string(EIGEN_MINOR_VERSION)},
                   {"compiler", __VERSION__},
                   {"threads", solve::thread_count()},
                   {"outputs", res.outputs},
                   {"exit_code", code},
                   {"timings", timings}};
  write_json(out / "manifest.json", manifest);

  if (!error.empty()) std::cerr << cmd << ": " << error << "\n";
  std::cout << cmd << ": " << (code == kPass ? "pass" : "FAIL") << " (exit " << code << ")\n";
  return code;
}

}  // namespace debye::cli
