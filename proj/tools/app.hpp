#pragma once

#include <algorithm>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "config.hpp"
#include "tractor/bgg.hpp"
#include "tractor/curves.hpp"
#include "tractor/integrals.hpp"
#include "tractor/metric.hpp"

namespace tractorcalc {

using namespace tractor;
using json = nlohmann::json;

struct Options {
  std::string config;
  std::string out = ".";
  int jobs = 1;
  std::optional<double> tol;
  bool renormalize = false;
};

// Runs f(i) for i < count over `jobs` threads in contiguous blocks; results land by index.
template <class T, class F>
std::vector<T> parallel_map(std::size_t count, int jobs, F f) {
  std::vector<T> out(count);
  const std::size_t nt = std::clamp<std::size_t>(static_cast<std::size_t>(std::max(jobs, 1)), 1, std::max<std::size_t>(count, 1));
  std::vector<std::exception_ptr> errs(nt);
  auto work = [&](std::size_t t) {
    const std::size_t lo = count * t / nt, hi = count * (t + 1) / nt;
    try {
      for (std::size_t i = lo; i < hi; ++i) out[i] = f(i);
    } catch (...) {
      errs[t] = std::current_exception();
    }
  };
  if (nt == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < nt; ++t) pool.emplace_back(work, t);
    for (auto& th : pool) th.join();
  }
  for (auto& e : errs)
    if (e) std::rethrow_exception(e);
  return out;
}

// ---- setup -----------------------------------------------------------------

struct Geometry {
  MetricSpec metric;
  AffineSpec affine;
};

inline Geometry build_geometry(const Section& s) {
  const std::string name = s.str("name");
  auto only = [&](std::initializer_list<const char*> keys) {
    std::set<std::string> ok(keys.begin(), keys.end());
    ok.insert({"name", "projective_phi", "conformal_phi"});
    for (const char* k : {"n", "p", "q", "radius", "components", "signature"})
      if (s.has(k) && !ok.count(k)) throw bad_input("config: key '" + std::string(k) + "' does not apply to metric '" + name + "'");
  };
  auto positive_n = [&] {
    const int n = s.integer("n");
    if (n < 1 || n > 6) throw bad_input("config: metric dimension must be in [1, 6]");
    return n;
  };
  std::optional<MetricSpec> m;
  if (name == "euclidean") {
    only({"n"});
    m = euclidean(positive_n());
  } else if (name == "minkowski") {
    only({"p", "q"});
    m = minkowski(s.integer("p"), s.integer("q"));
  } else if (name == "sphere_stereographic") {
    only({"n", "radius"});
    m = sphere_stereographic(positive_n(), s.num("radius", 1.0));
  } else if (name == "poincare_ball") {
    only({"n"});
    m = poincare_ball(positive_n());
  } else if (name == "expression_matrix") {
    only({"n", "components", "signature"});
    const int n = positive_n();
    std::vector<int> sig = s.has("signature") ? s.ints("signature") : std::vector<int>(static_cast<std::size_t>(n), 1);
    m = expression_matrix(n, s.strs("components"), sig);
  } else {
    throw bad_input("config: unknown metric '" + name + "' (see the catalog command)");
  }
  if (s.has("conformal_phi")) m = conformal_rescale(*m, parse_expression(s.str("conformal_phi"), m->dim()));
  if (s.has("projective_phi")) {
    AffineSpec aff(*m, parse_expression(s.str("projective_phi"), m->dim()));
    return {*m, aff};
  }
  return {*m, AffineSpec(*m)};
}

inline Vec sized(const Section& s, const std::string& key, int n) {
  Vec v = s.nums(key);
  if (static_cast<int>(v.size()) != n)
    throw bad_input("config: '" + key + "' in [" + s.name() + "] has " + std::to_string(v.size()) + " entries, metric has n = " + std::to_string(n));
  return v;
}

inline ScanGrid build_grid(const Section& s, int n) {
  const Vec box = s.nums("box");
  const std::vector<int> res = s.ints("resolution");
  if (static_cast<int>(box.size()) != 2 * n) throw bad_input("config: 'box' in [" + s.name() + "] needs 2n = " + std::to_string(2 * n) + " entries");
  if (static_cast<int>(res.size()) != n) throw bad_input("config: 'resolution' in [" + s.name() + "] needs n = " + std::to_string(n) + " entries");
  ScanGrid g;
  for (int i = 0; i < n; ++i) {
    g.lo.push_back(box[static_cast<std::size_t>(2 * i)]);
    g.hi.push_back(box[static_cast<std::size_t>(2 * i + 1)]);
  }
  g.res = res;
  g.validate();
  return g;
}

struct CurvePlan {
  CurveKind kind = CurveKind::Geodesic;
  Vec x0, u0, a0;
  double h = 1e-2;
  int steps = 100;
  IntegrateOptions opt;
};

inline CurveKind parse_curve_kind(const std::string& k) {
  for (CurveKind c : {CurveKind::Geodesic, CurveKind::NullGeodesic, CurveKind::ConformalCircle,
                      CurveKind::ConformalCircleProjective})
    if (k == curve_kind_name(c)) return c;
  throw bad_input("config: unknown curve kind '" + k + "'");
}

inline CurvePlan plan_curve(const RunConfig& rc, const Geometry& geo, const Options& o) {
  if (!rc.has_curve) throw bad_input("config: this command needs a [curve] section");
  const Section& s = rc.curve;
  const int n = geo.metric.dim();
  CurvePlan p;
  p.kind = parse_curve_kind(s.str("kind"));
  p.x0 = sized(s, "x0", n);
  p.u0 = sized(s, "u0", n);
  const bool third = p.kind == CurveKind::ConformalCircle || p.kind == CurveKind::ConformalCircleProjective;
  if (third) p.a0 = sized(s, "a0", n);
  else if (s.has("a0")) throw bad_input("config: a0 applies only to conformal circles");
  if (third && geo.affine.projective_phi()) throw bad_input("config: projective_phi applies only to geodesics");
  p.h = s.num("h");
  p.steps = s.integer("steps");
  p.opt.renormalize = o.renormalize || s.flag("renormalize", false);
  if (s.has("box")) {
    const Vec b = s.nums("box");
    if (static_cast<int>(b.size()) != 2 * n) throw bad_input("config: curve 'box' needs 2n entries");
    for (int i = 0; i < n; ++i) p.opt.box.emplace_back(b[static_cast<std::size_t>(2 * i)], b[static_cast<std::size_t>(2 * i + 1)]);
  }
  return p;
}

inline CurveSamples run_curve(const Geometry& geo, const CurvePlan& p) {
  switch (p.kind) {
    case CurveKind::Geodesic: return integrate_geodesic(geo.affine, p.x0, p.u0, p.h, p.steps, p.opt);
    case CurveKind::NullGeodesic:
      if (geo.affine.projective_phi()) throw bad_input("config: projective_phi applies only to geodesics");
      return integrate_null_geodesic(geo.metric, p.x0, p.u0, p.h, p.steps, p.opt);
    case CurveKind::ConformalCircle: return integrate_conformal_circle(geo.metric, p.x0, p.u0, p.a0, p.h, p.steps, p.opt);
    case CurveKind::ConformalCircleProjective:
      return integrate_conformal_circle_projective_param(geo.metric, p.x0, p.u0, p.a0, p.h, p.steps, p.opt);
    default: break;
  }
  throw bad_input("unsupported curve kind");
}

inline SigmaBuilder parse_builder(const std::string& b) {
  for (SigmaBuilder s : {SigmaBuilder::Projective, SigmaBuilder::Null, SigmaBuilder::Conformal})
    if (b == builder_name(s)) return s;
  throw bad_input("config: unknown builder '" + b + "' (projective, null or conformal)");
}

inline SigmaBuilder default_builder(CurveKind k) {
  if (k == CurveKind::Geodesic) return SigmaBuilder::Projective;
  if (k == CurveKind::NullGeodesic) return SigmaBuilder::Null;
  return SigmaBuilder::Conformal;
}

// Field block with per-use defaults for valence and symmetry.
inline FieldJet build_field(const Section& s, int n, const std::string& valence, Symmetry sym, double weight) {
  const auto v = parse_valence(s.str("valence", valence));
  const Symmetry y = s.has("symmetry") ? parse_symmetry(s.str("symmetry")) : sym;
  return FieldJet::expressions(n, s.strs("field"), v, s.num("weight", weight), y);
}

inline FieldJet build_field(const FieldConfig& f, int n) {
  return FieldJet::expressions(n, f.components, f.valence, f.weight, f.symmetry);
}

inline FirstIntegralSpec build_integral(const IntegralConfig& ic, const Geometry& geo) {
  const int n = geo.metric.dim();
  FirstIntegralSpec spec;
  spec.kind = ic.kind;
  if (ic.field) spec.field = build_field(*ic.field, n);
  spec.m0 = ic.m0;
  spec.builder = parse_builder(ic.builder);
  if (ic.kind == IntegralKind::GenericPairing) {
    if (ic.tractor != "L_cky2") throw bad_input("config: generic_pairing tractor must be L_cky2 in [integral." + ic.label + "]");
    if (!spec.field) throw bad_input("config: L_cky2 needs a field in [integral." + ic.label + "]");
    const MetricSpec m = geo.metric;
    const FieldJet k = *spec.field;
    spec.tractor = [m, k](std::span<const double> x) { return L_cky2(m, k, x); };
    spec.tractor_kind = TractorKind::Conformal;
  } else if (!ic.tractor.empty()) {
    throw bad_input("config: 'tractor' applies only to generic_pairing");
  }
  if (ic.kind != IntegralKind::GenericPairing && !spec.field)
    throw bad_input(std::string("config: ") + integral_kind_name(ic.kind) + " needs a field in [integral." + ic.label + "]");
  return spec;
}

// ---- output ----------------------------------------------------------------

inline std::filesystem::path out_file(const Options& o, const RunConfig& rc, const std::string& name) {
  std::filesystem::path dir(o.out);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw bad_input("cannot create output directory " + o.out + ": " + ec.message());
  return dir / (rc.output.str("prefix", "") + name);
}

inline void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw bad_input("cannot write " + p.string());
  f << text;
}

inline std::string csv_row(const Vec& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ',';
    s += shortest(v[i]);
  }
  return s + '\n';
}

inline std::string coord_header(int n, const std::string& p) {
  std::string s;
  for (int i = 1; i <= n; ++i) s += (i > 1 ? "," : "") + p + std::to_string(i);
  return s;
}

inline json finite(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

// ---- commands --------------------------------------------------------------

inline int cmd_integrate(const RunConfig& rc, const Options& o, std::ostream& out) {
  const Geometry geo = build_geometry(rc.metric);
  const CurvePlan p = plan_curve(rc, geo, o);
  const CurveSamples c = run_curve(geo, p);
  const int n = geo.metric.dim();
  std::string csv = "t," + coord_header(n, "x") + "," + coord_header(n, "u") + "," + coord_header(n, "a") + "\n";
  for (const auto& s : c.states) {
    Vec row{s.t};
    row.insert(row.end(), s.x.begin(), s.x.end());
    row.insert(row.end(), s.u.begin(), s.u.end());
    row.insert(row.end(), s.a.begin(), s.a.end());
    row.resize(1 + 3 * static_cast<std::size_t>(n), 0.0);
    csv += csv_row(row);
  }
  const auto& first = c.states.front();
  const auto& last = c.states.back();
  Vec dx(first.x.size());
  for (std::size_t i = 0; i < dx.size(); ++i) dx[i] = last.x[i] - first.x[i];
  const double uu0 = dot(geo.metric.metric_at(first.x), first.u, first.u);
  double speed_drift = 0.0, ua_max = 0.0;
  for (const auto& s : c.states) {
    const DenseTensor g = geo.metric.metric_at(s.x);
    const double uu = dot(g, s.u, s.u);
    speed_drift = std::max(speed_drift, std::abs(uu - uu0));
    if (!s.a.empty()) ua_max = std::max(ua_max, std::abs(dot(g, s.u, s.a)));
  }
  json d;
  d["metric"] = geo.metric.name();
  d["kind"] = curve_kind_name(c.kind);
  d["n"] = n;
  d["h"] = p.h;
  d["steps"] = p.steps;
  d["n_samples"] = c.states.size();
  d["renormalize"] = p.opt.renormalize;
  d["closure"] = finite(euclid_norm(dx));
  d["constraint_drift"]["speed"] = finite(speed_drift);
  if (p.kind == CurveKind::ConformalCircle) d["constraint_drift"]["u_dot_a"] = finite(ua_max);
  if ((p.kind == CurveKind::ConformalCircle || p.kind == CurveKind::ConformalCircleProjective) && c.states.size() >= 5)
    d["circle_residual"] = finite(conformal_circle_residual(geo.metric, c));
  write_text(out_file(o, rc, "curve.csv"), csv);
  write_text(out_file(o, rc, "diagnostics.json"), d.dump(2) + "\n");
  out << curve_kind_name(c.kind) << ": " << c.states.size() << " samples, closure " << shortest(euclid_norm(dx))
      << ", speed drift " << shortest(speed_drift) << "\n";
  return 0;
}

inline int cmd_conserve(const RunConfig& rc, const Options& o, std::ostream& out) {
  const Geometry geo = build_geometry(rc.metric);
  std::vector<FirstIntegralSpec> specs;
  for (const auto& ic : rc.integrals) specs.push_back(build_integral(ic, geo));
  json reports = json::array();
  bool ok = true;
  std::optional<CurvePlan> plan;
  if (rc.has_curve || !specs.empty()) plan = plan_curve(rc, geo, o);
  if (!specs.empty()) {
    const CurvePlan& p = *plan;
    const CurveSamples c = run_curve(geo, p);
    std::vector<ConservationReport> rs = parallel_map<ConservationReport>(specs.size(), o.jobs, [&](std::size_t i) {
      const double tol = o.tol ? *o.tol : rc.integrals[i].tol.value_or(1e-6);
      return verify_conservation(geo.affine, c, specs[i], tol);
    });
    std::string csv = "t";
    for (const auto& ic : rc.integrals) csv += "," + ic.label;
    csv += "\n";
    for (std::size_t k = 0; k < c.states.size(); ++k) {
      Vec row{c.states[k].t};
      for (const auto& r : rs) row.push_back(r.values[k]);
      csv += csv_row(row);
    }
    for (std::size_t i = 0; i < rs.size(); ++i) {
      const auto& r = rs[i];
      json j;
      j["label"] = rc.integrals[i].label;
      j["kind"] = r.kind;
      j["Q0"] = finite(r.Q0);
      j["abs_drift"] = finite(r.abs_drift);
      j["rel_drift"] = finite(r.rel_drift);
      j["n_samples"] = r.n_samples;
      j["h"] = r.h;
      j["tol"] = r.tol;
      j["pass"] = r.pass;
      reports.push_back(j);
      ok = ok && r.pass;
      out << rc.integrals[i].label << " " << r.kind << ": Q0 " << shortest(r.Q0) << ", rel drift "
          << shortest(r.rel_drift) << (r.pass ? " PASS" : " FAIL") << "\n";
    }
    write_text(out_file(o, rc, "integrals.csv"), csv);
  }
  write_text(out_file(o, rc, "conservation.json"), reports.dump(2) + "\n");
  if (specs.empty()) out << "no integrals configured\n";
  return ok ? 0 : 1;
}

inline int cmd_residual(const RunConfig& rc, const Options& o, std::ostream& out) {
  if (!rc.has_residual) throw bad_input("config: this command needs a [residual] section");
  const Geometry geo = build_geometry(rc.metric);
  const Section& s = rc.residual;
  const int n = geo.metric.dim();
  const std::string kind = s.str("kind");
  std::function<double(const Vec&)> r;
  if (kind == "killing") {
    const FieldJet k = build_field(s, n, "l", Symmetry::None, 0);
    r = [&geo, k](const Vec& x) { return residual_killing(geo.affine, k, x); };
  } else if (kind == "conformal_killing") {
    const FieldJet k = build_field(s, n, "l", Symmetry::None, 0);
    r = [&geo, k](const Vec& x) { return residual_conformal_killing(geo.metric, k, x); };
  } else if (kind == "cky2") {
    const FieldJet k = build_field(s, n, "ll", Symmetry::Skew, 3);
    r = [&geo, k](const Vec& x) { return residual_cky2(geo.metric, k, x); };
  } else if (kind == "bgg3_proj") {
    const FieldJet t = build_field(s, n, "", Symmetry::None, 2);
    r = [&geo, t](const Vec& x) { return residual_bgg3_projective(geo.affine, t, x); };
  } else if (kind == "bgg3_conf") {
    const FieldJet t = build_field(s, n, "", Symmetry::None, 2);
    r = [&geo, t](const Vec& x) { return residual_bgg3_conformal(geo.metric, t, x); };
  } else if (kind == "eq-proj-wt-bv") {
    const FieldJet t = build_field(s, n, "uu", Symmetry::Skew, -2);
    r = [&geo, t](const Vec& x) { return residual_proj_bivector(geo.affine, t, x); };
  } else {
    throw bad_input("config: unknown residual kind '" + kind + "'");
  }
  const ScanGrid grid = build_grid(s, n);
  const Vec vals = parallel_map<double>(grid.cells(), o.jobs, [&](std::size_t c) { return r(grid.centre(c)); });
  std::string csv = coord_header(n, "x") + ",residual\n";
  double worst = 0.0, sum = 0.0;
  for (std::size_t c = 0; c < vals.size(); ++c) {
    Vec row = grid.centre(c);
    row.push_back(vals[c]);
    csv += csv_row(row);
    worst = std::isfinite(vals[c]) ? std::max(worst, vals[c]) : std::numeric_limits<double>::infinity();
    sum += vals[c];
  }
  const std::optional<double> tol = o.tol ? o.tol : (s.has("tol") ? std::optional<double>(s.num("tol")) : std::nullopt);
  json j;
  j["kind"] = kind;
  j["metric"] = geo.metric.name();
  j["points"] = vals.size();
  j["max"] = finite(worst);
  j["mean"] = finite(sum / static_cast<double>(vals.size()));
  if (tol) {
    j["tol"] = *tol;
    j["pass"] = worst < *tol;
  }
  write_text(out_file(o, rc, "residual.csv"), csv);
  write_text(out_file(o, rc, "residual.json"), j.dump(2) + "\n");
  out << kind << ": " << vals.size() << " points, max residual " << shortest(worst) << "\n";
  return tol && !(worst < *tol) ? 1 : 0;
}

inline int cmd_scan(const RunConfig& rc, const Options& o, std::ostream& out) {
  if (!rc.has_scan) throw bad_input("config: this command needs a [scan] section");
  const Geometry geo = build_geometry(rc.metric);
  const Section& s = rc.scan;
  const int n = geo.metric.dim();
  const std::string pred = s.str("predicate");
  const ScanGrid grid = build_grid(s, n);
  const bool seeded = s.has("seed_x") || s.has("seed_u") || s.has("seed_a");
  if (pred != "cky_transport" && seeded) throw bad_input("config: seeds apply only to predicate cky_transport");
  if (pred == "cky_transport" && s.has("field")) throw bad_input("config: cky_transport takes seeds, not a field");
  CellPredicate p;
  if (pred == "bivector") {
    p = bivector_zero_predicate(geo.affine, build_field(s, n, "uu", Symmetry::Skew, -2));
  } else if (pred == "cky") {
    p = cky_zero_predicate(geo.metric, build_field(s, n, "ll", Symmetry::Skew, 3));
  } else if (pred == "ck") {
    p = ck_zero_predicate(geo.metric, build_field(s, n, "l", Symmetry::None, 2));
  } else if (pred == "cky_transport") {
    CurveState st;
    st.x = sized(s, "seed_x", n);
    st.u = sized(s, "seed_u", n);
    st.a = sized(s, "seed_a", n);
    const DenseTensor g = geo.metric.metric_at(st.x);
    detail::require_velocity(st.u, n);
    detail::near_null_guard(g, st.u, 0.0);
    const DenseTensor K0 = move_all_slots(sigma_conformal(g, st), conf::metric(g), conf::metric_inv(inverse_metric(g)));
    p = cky_tractor_predicate(transport_to_grid(conformal_connection(geo.metric), grid, st.x, K0));
  } else {
    throw bad_input("config: unknown scan predicate '" + pred + "'");
  }
  double cell = 0.0;
  for (int i = 0; i < n; ++i) cell = std::max(cell, grid.spacing(i));
  const double tol = o.tol ? *o.tol : s.num("tol", cell);
  const Vec vals = parallel_map<double>(grid.cells(), o.jobs, [&](std::size_t c) { return p(c, grid.centre(c)); });
  std::string csv = coord_header(n, "x") + ",norm\n";
  std::size_t hits = 0;
  for (std::size_t c = 0; c < vals.size(); ++c) {
    if (!(vals[c] < tol)) continue;
    Vec row = grid.centre(c);
    row.push_back(vals[c]);
    csv += csv_row(row);
    ++hits;
  }
  json j;
  j["predicate"] = pred;
  j["metric"] = geo.metric.name();
  j["cells"] = vals.size();
  j["hits"] = hits;
  j["tol"] = tol;
  j["cell_size"] = cell;
  write_text(out_file(o, rc, "scan.csv"), csv);
  write_text(out_file(o, rc, "scan.json"), j.dump(2) + "\n");
  out << pred << ": " << hits << " of " << vals.size() << " cells below " << shortest(tol) << "\n";
  return 0;
}

inline int cmd_transport(const RunConfig& rc, const Options& o, std::ostream& out) {
  const Geometry geo = build_geometry(rc.metric);
  const CurvePlan p = plan_curve(rc, geo, o);
  const SigmaBuilder b = rc.has_transport && rc.transport.has("builder") ? parse_builder(rc.transport.str("builder"))
                                                                        : default_builder(p.kind);
  if (b != SigmaBuilder::Projective && geo.affine.projective_phi())
    throw bad_input("config: conformal builders need a Levi-Civita connection");
  const double tol = o.tol ? *o.tol : (rc.has_transport ? rc.transport.num("tol", 1e-6) : 1e-6);
  const CurveSamples c = run_curve(geo, p);
  const ConnectionProvider conn =
      b == SigmaBuilder::Projective ? projective_connection(geo.affine) : conformal_connection(geo.metric);
  const DenseTensor S0 = curve_sigma(geo.metric, b, c.states.front());
  const auto T = tractor_transport(conn, c, S0);
  const double scale = std::max(1.0, S0.max_abs());
  std::string csv = "t,deviation\n";
  double worst = 0.0;
  for (std::size_t i = 0; i < c.states.size(); ++i) {
    const double d = max_abs_diff(curve_sigma(geo.metric, b, c.states[i]), T[i]) / scale;
    worst = std::isfinite(d) ? std::max(worst, d) : std::numeric_limits<double>::infinity();
    csv += csv_row({c.states[i].t, d});
  }
  json j;
  j["builder"] = builder_name(b);
  j["kind"] = curve_kind_name(c.kind);
  j["metric"] = geo.metric.name();
  j["n_samples"] = c.states.size();
  j["max_deviation"] = finite(worst);
  if (c.states.size() >= 5) j["parallel_residual"] = finite(parallel_residual(geo.affine, c, b));
  j["tol"] = tol;
  j["pass"] = worst < tol;
  write_text(out_file(o, rc, "transport.csv"), csv);
  write_text(out_file(o, rc, "transport.json"), j.dump(2) + "\n");
  out << builder_name(b) << " sigma: max deviation from transport " << shortest(worst) << (worst < tol ? " PASS" : " FAIL")
      << "\n";
  return worst < tol ? 0 : 1;
}

// Each entry with sample parameters, its declared signature checked against the metric's eigenvalues.
inline int cmd_catalog(std::ostream& out) {
  const std::vector<std::pair<MetricSpec, Vec>> samples = {
      {euclidean(3), {0.3, -0.2, 0.5}},
      {minkowski(3, 1), {0.1, 0.2, 0.3, 0.4}},
      {sphere_stereographic(3, 1.0), {0.3, -0.2, 0.5}},
      {poincare_ball(3), {0.3, -0.2, 0.5}},
      {expression_matrix(2, {"-(1 + x2^2)", "1"}, {-1, 1}), {0.3, -0.2}},
  };
  const auto entries = catalog();
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& e = entries[i];
    const auto& [m, x] = samples[i];
    std::string check;
    try {
      m.metric_at(x);
      check = "signature ok";
    } catch (const Error& err) {
      check = std::string("signature mismatch: ") + err.what();
    }
    std::string sig;
    for (int v : m.signature()) sig += v < 0 ? '-' : '+';
    out << e.name << "\tparams: " << e.params << "\tdomain: " << e.domain << "\texample " << m.name() << " (" << sig
        << ") " << check << "\n";
    if (check != "signature ok") return 1;
  }
  return 0;
}

inline int exit_code(ErrorKind k) {
  switch (k) {
    case ErrorKind::Verification: return 1;
    case ErrorKind::ChartExit: return 2;
    case ErrorKind::BadInput:
    case ErrorKind::Precondition: return 3;
  }
  return 3;
}

inline int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"tractorcalc: distinguished curves, tractors and first integrals"};
  app.require_subcommand(1);
  app.fallthrough();
  Options o;
  double tol = 0.0;
  auto* tol_opt = app.add_option("--tol", tol, "tolerance overriding the config");
  app.add_option("--config", o.config, "config file");
  app.add_option("--out", o.out, "output directory")->capture_default_str();
  app.add_option("--jobs", o.jobs, "threads for grid sweeps")->check(CLI::Range(1, 256));
  app.add_flag("--renormalize", o.renormalize, "re-impose the unit constraints after every step");
  const std::vector<std::pair<std::string, std::string>> cmds = {
      {"integrate", "integrate the configured curve; writes curve.csv and diagnostics.json"},
      {"conserve", "verify every [integral.*] block along the curve"},
      {"residual", "evaluate a BGG residual over a grid"},
      {"scan", "zero-locus scan over a grid"},
      {"transport", "compare the curve's tractor with its parallel transport"},
      {"catalog", "list builtin metrics"},
  };
  for (const auto& [name, help] : cmds) app.add_subcommand(name, help);
  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return 3;
  }
  if (*tol_opt) {
    if (!(tol > 0)) {
      err << "error: --tol must be positive\n";
      return 3;
    }
    o.tol = tol;
  }
  const std::string cmd = app.get_subcommands().front()->get_name();
  try {
    if (cmd == "catalog") return cmd_catalog(out);
    if (o.config.empty()) throw bad_input("--config is required for " + cmd);
    const RunConfig rc = load_config(o.config);
    if (cmd == "integrate") return cmd_integrate(rc, o, out);
    if (cmd == "conserve") return cmd_conserve(rc, o, out);
    if (cmd == "residual") return cmd_residual(rc, o, out);
    if (cmd == "scan") return cmd_scan(rc, o, out);
    return cmd_transport(rc, o, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 3;
  }
}

}  // namespace tractorcalc
