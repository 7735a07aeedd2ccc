#include "taintperf/pmnf.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <nlohmann/json.hpp>
#include <set>

#include "taintperf/util.hpp"

namespace taintperf::pmnf {

namespace {
constexpr double kSmapeTie = 1e-9;
constexpr double kMaxCondition = 1e12;
}  // namespace

Rational::Rational(int n, int d) {
  if (d == 0) throw std::invalid_argument("zero denominator");
  if (d < 0) {
    n = -n;
    d = -d;
  }
  int g = std::gcd(n, d);
  num = g ? n / g : 0;
  den = g ? d / g : 1;
}

std::string Rational::str() const {
  return den == 1 ? std::to_string(num) : std::to_string(num) + "/" + std::to_string(den);
}

SearchSpace SearchSpace::defaults() {
  SearchSpace s;
  s.I = {{0},    {1, 4}, {1, 3}, {1, 2}, {2, 3}, {3, 4},  {1},    {5, 4}, {4, 3},
         {3, 2}, {5, 3}, {7, 4}, {2},    {9, 4}, {5, 2},  {8, 3}, {11, 4}, {3}};
  s.J = {0, 1, 2};
  return s;
}

// ---------------------------------------------------------------------------
// Terms and hypotheses

double Term::eval(const Config& cfg) const {
  double v = 1;
  for (const auto& f : factors) {
    auto it = cfg.find(f.param);
    if (it == cfg.end()) throw std::invalid_argument("missing value for parameter '" + f.param + "'");
    double x = it->second;
    if (!(x >= 1)) throw std::invalid_argument("parameter '" + f.param + "' must be >= 1, got " + format_number(x));
    if (f.i.num != 0) v *= f.i.den == 1 ? std::pow(x, f.i.num) : std::exp(f.i.value() * std::log(x));
    if (f.j != 0) v *= std::pow(std::log2(x), f.j);
  }
  return v;
}

std::string Term::str() const {
  std::string s;
  for (const auto& f : factors) {
    std::string part;
    if (f.i.num != 0) {
      part = f.param;
      if (!(f.i == Rational(1))) part += f.i.den == 1 ? "^" + f.i.str() : "^(" + f.i.str() + ")";
    }
    if (f.j != 0) {
      if (!part.empty()) part += " * ";
      part += "log2(" + f.param + ")";
      if (f.j != 1) part += "^" + std::to_string(f.j);
    }
    if (!s.empty()) s += " * ";
    s += part;
  }
  return s;
}

Term Term::times(const Term& other) const {
  Term t = *this;
  for (const auto& f : other.factors) {
    auto it = std::find_if(t.factors.begin(), t.factors.end(), [&](const Factor& g) { return g.param == f.param; });
    if (it != t.factors.end()) throw std::invalid_argument("term product repeats parameter '" + f.param + "'");
    t.factors.push_back(f);
  }
  std::sort(t.factors.begin(), t.factors.end());
  return t;
}

void Hypothesis::canonicalize() {
  std::sort(terms.begin(), terms.end());
  terms.erase(std::unique(terms.begin(), terms.end()), terms.end());
}

std::string Hypothesis::str() const {
  std::string s = "c0";
  for (std::size_t k = 0; k < terms.size(); ++k) s += " + c" + std::to_string(k + 1) + " * " + terms[k].str();
  return s;
}

namespace {

std::string format_coefficient(double c) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", c);
  std::string s(buf);
  // 2.4e-08 -> 2.4e-8
  auto e = s.find('e');
  if (e != std::string::npos) {
    std::size_t k = e + 2;
    while (k + 1 < s.size() && s[k] == '0') s.erase(k, 1);
    if (s[e + 1] == '+') s.erase(e + 1, 1);
  }
  return s;
}

}  // namespace

std::string PerfModel::formula() const {
  std::string s;
  auto append = [&](double c, const std::string& body) {
    if (s.empty()) {
      s = format_coefficient(c);
    } else {
      s += c < 0 ? " - " : " + ";
      s += format_coefficient(std::fabs(c));
    }
    if (!body.empty()) s += " * " + body;
  };
  for (std::size_t k = 0; k < hypothesis.terms.size(); ++k)
    if (coefficients[k + 1] != 0) append(coefficients[k + 1], hypothesis.terms[k].str());
  double c0 = coefficients.empty() ? 0 : coefficients[0];
  if (s.empty() || std::fabs(c0) > 1e-10 * y_scale) append(c0, "");
  return s;
}

// ---------------------------------------------------------------------------
// Measurements

double median(std::vector<double> v) {
  if (v.empty()) throw std::invalid_argument("median of an empty sample");
  std::sort(v.begin(), v.end());
  std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double smape(const std::vector<double>& actual, const std::vector<double>& predicted) {
  if (actual.empty()) return 0;
  double s = 0;
  for (std::size_t i = 0; i < actual.size(); ++i) {
    double denom = std::fabs(actual[i]) + std::fabs(predicted[i]);
    if (denom > 0) s += 2 * std::fabs(predicted[i] - actual[i]) / denom;
  }
  return s / static_cast<double>(actual.size());
}

std::vector<Point> MeasurementSet::aggregate() const {
  std::vector<Point> out;
  for (const auto& m : points) out.push_back({m.config, median(m.samples)});
  return out;
}

std::vector<Hypothesis> enumerate_hypotheses(const SearchSpace& space, const std::string& param) {
  if (space.I.empty() || space.J.empty()) throw std::invalid_argument("search space needs non-empty I and J");
  std::vector<Term> singles;
  for (const auto& i : space.I)
    for (int j : space.J) {
      if (i.num == 0 && j == 0) continue;
      singles.push_back(Term{{Factor{param, i, j}}});
    }
  std::vector<Hypothesis> out{Hypothesis{}};
  std::vector<std::size_t> idx;
  // Depth-first over increasing index tuples of length 1..n.
  auto rec = [&](auto&& self, std::size_t start) -> void {
    for (std::size_t k = start; k < singles.size(); ++k) {
      idx.push_back(k);
      Hypothesis h;
      for (auto t : idx) h.terms.push_back(singles[t]);
      h.canonicalize();
      out.push_back(std::move(h));
      if (static_cast<int>(idx.size()) < space.n) self(self, k + 1);
      idx.pop_back();
    }
  };
  rec(rec, 0);
  return out;
}

// ---------------------------------------------------------------------------
// Fitting

namespace {

std::vector<std::string> params_in(const Hypothesis& h) {
  std::set<std::string> s;
  for (const auto& t : h.terms)
    for (const auto& f : t.factors) s.insert(f.param);
  return {s.begin(), s.end()};
}

Eigen::VectorXd solve_min_norm(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(X, Eigen::ComputeThinU | Eigen::ComputeThinV);
  svd.setThreshold(1e-12);
  return svd.solve(y);
}

}  // namespace

FitResult fit(const Hypothesis& h, const std::vector<Point>& data) {
  FitResult res;
  const std::size_t m = data.size();
  const std::size_t k = h.terms.size() + 1;
  if (m < k + 1) {
    res.rejected = "underdetermined: " + std::to_string(k) + " coefficients need at least " + std::to_string(k + 1) +
                   " configurations, got " + std::to_string(m);
    return res;
  }
  Eigen::MatrixXd X(m, k);
  Eigen::VectorXd y(m);
  for (std::size_t r = 0; r < m; ++r) {
    X(r, 0) = 1;
    for (std::size_t c = 1; c < k; ++c) X(r, c) = h.terms[c - 1].eval(data[r].config);
    y(r) = data[r].value;
  }
  if (!X.allFinite() || !y.allFinite()) {
    res.rejected = "non-finite term value";
    return res;
  }
  Eigen::VectorXd norms = X.colwise().norm();
  for (std::size_t c = 0; c < k; ++c)
    if (norms(c) == 0) {
      res.rejected = "term " + std::to_string(c) + " is zero on every configuration";
      return res;
    }
  Eigen::MatrixXd Xn = X * norms.cwiseInverse().asDiagonal();
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(Xn, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  double cond = sv(sv.size() - 1) > 0 ? sv(0) / sv(sv.size() - 1) : INFINITY;
  if (!(cond <= kMaxCondition)) {
    res.rejected = "ill-conditioned design (condition number " + format_number(cond) + ")";
    return res;
  }
  Eigen::VectorXd beta = svd.solve(y);
  Eigen::VectorXd coef = beta.cwiseQuotient(norms);
  Eigen::VectorXd fitted = Xn * beta;
  Eigen::VectorXd resid = y - fitted;

  // Leave-one-out predictions from the hat matrix diagonal, refitting explicitly near leverage 1.
  const Eigen::MatrixXd& U = svd.matrixU();
  std::vector<double> actual(m), loo(m);
  for (std::size_t r = 0; r < m; ++r) {
    actual[r] = y(r);
    double h_ii = U.row(r).squaredNorm();
    if (1 - h_ii > 1e-8) {
      loo[r] = y(r) - resid(r) / (1 - h_ii);
    } else {
      Eigen::MatrixXd Xr(m - 1, k);
      Eigen::VectorXd yr(m - 1);
      for (std::size_t q = 0, w = 0; q < m; ++q) {
        if (q == r) continue;
        Xr.row(w) = Xn.row(q);
        yr(w++) = y(q);
      }
      loo[r] = Xn.row(r).dot(solve_min_norm(Xr, yr));
    }
  }

  double ymax = y.cwiseAbs().maxCoeff();
  PerfModel model;
  model.hypothesis = h;
  model.coefficients.assign(coef.data(), coef.data() + coef.size());
  model.params = params_in(h);
  model.y_scale = ymax > 0 ? ymax : 1;
  if (!coef.allFinite()) {
    res.rejected = "non-finite coefficients";
    return res;
  }

  const double floor = -1e-9 * ymax;
  for (std::size_t r = 0; r < m; ++r)
    if (fitted(r) < floor) {
      res.rejected = "negative prediction at a training configuration";
      return res;
    }
  if (!model.params.empty() && model.params.size() <= 16) {
    std::map<std::string, std::pair<double, double>> range;
    for (const auto& p : model.params) {
      double lo = INFINITY, hi = -INFINITY;
      for (const auto& pt : data) {
        lo = std::min(lo, pt.config.at(p));
        hi = std::max(hi, pt.config.at(p));
      }
      range[p] = {lo, hi};
    }
    for (std::size_t mask = 0; mask < (std::size_t{1} << model.params.size()); ++mask) {
      Config corner = data.front().config;
      for (std::size_t b = 0; b < model.params.size(); ++b) {
        const auto& r = range[model.params[b]];
        corner[model.params[b]] = (mask >> b) & 1 ? r.second : r.first;
      }
      if (evaluate(model, corner) < floor) {
        res.rejected = "negative prediction on the training hull";
        return res;
      }
    }
  }

  model.stats.smape = smape(actual, loo);
  model.stats.rss = resid.squaredNorm();
  double mean = y.mean();
  double tss = (y.array() - mean).square().sum();
  if (m > k && tss > 0) {
    model.stats.adj_r2 = 1 - (model.stats.rss / static_cast<double>(m - k)) / (tss / static_cast<double>(m - 1));
  } else {
    model.stats.adj_r2 = model.stats.rss <= 1e-20 * std::max(1.0, ymax * ymax) ? 1 : 0;
  }
  res.model = std::move(model);
  return res;
}

bool better(const PerfModel& a, const PerfModel& b) {
  if (std::fabs(a.stats.smape - b.stats.smape) > kSmapeTie) return a.stats.smape < b.stats.smape;
  if (a.hypothesis.terms.size() != b.hypothesis.terms.size())
    return a.hypothesis.terms.size() < b.hypothesis.terms.size();
  return a.hypothesis < b.hypothesis;
}

double evaluate(const PerfModel& model, const Config& config) {
  if (model.coefficients.size() != model.hypothesis.terms.size() + 1)
    throw std::invalid_argument("model has " + std::to_string(model.coefficients.size()) + " coefficients for " +
                                std::to_string(model.hypothesis.terms.size()) + " terms");
  double v = model.coefficients[0];
  for (std::size_t k = 0; k < model.hypothesis.terms.size(); ++k)
    v += model.coefficients[k + 1] * model.hypothesis.terms[k].eval(config);
  return v;
}

// ---------------------------------------------------------------------------
// Selection

namespace {

struct Best {
  std::optional<PerfModel> model;
  void offer(std::optional<PerfModel> m) {
    if (m && (!model || better(*m, *model))) model = std::move(m);
  }
};

PerfModel constant_median(const std::vector<Point>& pts, const std::vector<std::string>& params) {
  std::vector<double> ys;
  for (const auto& p : pts) ys.push_back(p.value);
  PerfModel m;
  m.coefficients = {median(ys)};
  std::vector<double> pred(ys.size(), m.coefficients[0]);
  m.stats.smape = smape(ys, pred);
  for (double y : ys) m.stats.rss += (y - m.coefficients[0]) * (y - m.coefficients[0]);
  m.stats.adj_r2 = 0;
  m.params = params;
  double ymax = 0;
  for (double y : ys) ymax = std::max(ymax, std::fabs(y));
  m.y_scale = ymax > 0 ? ymax : 1;
  return m;
}

std::vector<std::string> varying_params(const std::vector<Point>& pts) {
  std::map<std::string, std::set<double>> seen;
  for (const auto& p : pts)
    for (const auto& [k, v] : p.config) seen[k].insert(v);
  std::vector<std::string> out;
  for (const auto& [k, vals] : seen)
    if (vals.size() >= 2) out.push_back(k);
  return out;
}

// Points where every modeled parameter other than `param` sits at its smallest value.
std::vector<Point> base_slice(const std::vector<Point>& pts, const std::string& param,
                              const std::vector<std::string>& modeled) {
  std::map<std::string, double> base;
  for (const auto& q : modeled) {
    double lo = INFINITY;
    for (const auto& p : pts) lo = std::min(lo, p.config.at(q));
    base[q] = lo;
  }
  std::vector<Point> out;
  for (const auto& p : pts) {
    bool on = std::all_of(modeled.begin(), modeled.end(),
                          [&](const std::string& q) { return q == param || p.config.at(q) == base[q]; });
    if (on) out.push_back(p);
  }
  return out;
}

std::vector<Hypothesis> top_single(const std::vector<Point>& slice, const std::string& param, const SelectOptions& opts) {
  std::set<double> values;
  for (const auto& p : slice) values.insert(p.config.at(param));
  const std::size_t need = static_cast<std::size_t>(opts.space.n) + 2;
  if (values.size() < need)
    throw UnderdeterminedError("underdetermined: parameter '" + param + "' needs at least " + std::to_string(need) +
                               " distinct values with the other parameters at their base values, got " +
                               std::to_string(values.size()));
  std::vector<PerfModel> fits;
  for (const auto& h : enumerate_hypotheses(opts.space, param))
    if (auto r = fit(h, slice); r.model) fits.push_back(std::move(*r.model));
  // Sequential reduction keeps the result independent of sort stability under the tie tolerance.
  std::vector<Hypothesis> out;
  std::vector<bool> used(fits.size(), false);
  for (int t = 0; t < opts.top_k; ++t) {
    std::optional<std::size_t> pick;
    for (std::size_t i = 0; i < fits.size(); ++i)
      if (!used[i] && (!pick || better(fits[i], fits[*pick]))) pick = i;
    if (!pick) break;
    used[*pick] = true;
    out.push_back(fits[*pick].hypothesis);
  }
  return out;
}

using TermSet = std::vector<Term>;

// Term lists a group of parameters may contribute, given one single-parameter choice per member.
std::vector<TermSet> group_variants(const std::vector<const Hypothesis*>& choice, bool multiplicative) {
  std::vector<TermSet> out;
  TermSet additive;
  std::vector<const Hypothesis*> nonconst;
  for (const auto* h : choice) {
    additive.insert(additive.end(), h->terms.begin(), h->terms.end());
    if (!h->terms.empty()) nonconst.push_back(h);
  }
  out.push_back(additive);
  if (!multiplicative || nonconst.size() < 2) return out;

  std::vector<Term> products{Term{}};
  for (const auto* h : nonconst) {
    std::vector<Term> next;
    for (const auto& a : products)
      for (const auto& t : h->terms) next.push_back(a.times(t));
    products = std::move(next);
  }
  out.push_back(products);
  for (const auto& p : products) out.push_back({p});
  TermSet full = additive;
  full.insert(full.end(), products.begin(), products.end());
  out.push_back(full);
  return out;
}

void cartesian(const std::vector<std::vector<Hypothesis>>& cands, std::size_t i, std::vector<const Hypothesis*>& cur,
               const std::function<void()>& fn) {
  if (i == cands.size()) {
    fn();
    return;
  }
  for (const auto& h : cands[i]) {
    cur.push_back(&h);
    cartesian(cands, i + 1, cur, fn);
    cur.pop_back();
  }
}

// Best model for one dependency structure given per-parameter candidates.
std::optional<PerfModel> combine(const std::vector<Point>& pts, const std::vector<ParamSet>& groups,
                                 const std::vector<bool>& mult, const std::map<std::string, std::vector<Hypothesis>>& top) {
  // Variants per group, then every combination across groups.
  std::vector<std::vector<TermSet>> per_group;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    std::vector<std::vector<Hypothesis>> cands;
    for (const auto& p : groups[g]) cands.push_back(top.at(p));
    std::set<TermSet> variants;
    std::vector<const Hypothesis*> cur;
    cartesian(cands, 0, cur, [&] {
      for (auto& v : group_variants(cur, mult[g])) {
        std::sort(v.begin(), v.end());
        variants.insert(v);
      }
    });
    per_group.emplace_back(variants.begin(), variants.end());
  }
  std::set<Hypothesis> hyps;
  std::vector<std::size_t> idx(per_group.size(), 0);
  for (;;) {
    Hypothesis h;
    for (std::size_t g = 0; g < per_group.size(); ++g)
      h.terms.insert(h.terms.end(), per_group[g][idx[g]].begin(), per_group[g][idx[g]].end());
    h.canonicalize();
    hyps.insert(std::move(h));
    std::size_t g = 0;
    while (g < idx.size() && ++idx[g] == per_group[g].size()) idx[g++] = 0;
    if (g == idx.size()) break;
  }
  Best best;
  for (const auto& h : hyps) best.offer(fit(h, pts).model);
  return best.model;
}

}  // namespace

PerfModel select_model(const MeasurementSet& data, const std::optional<ModelDeps>& deps, const SelectOptions& opts) {
  if (data.points.empty()) throw std::invalid_argument("no measurements for " + data.function);
  auto pts = data.aggregate();
  auto varying = varying_params(pts);

  if (deps && deps->dep_params.empty()) return constant_median(pts, {});

  std::vector<std::string> modeled;
  for (const auto& p : varying)
    if (!deps || deps->dep_params.count(p)) modeled.push_back(p);
  if (modeled.empty()) {
    Best best;
    best.offer(fit(Hypothesis{}, pts).model);
    if (!best.model) return constant_median(pts, {});
    return *best.model;
  }

  std::map<std::string, std::vector<Hypothesis>> top;
  for (const auto& p : modeled) top[p] = top_single(base_slice(pts, p, modeled), p, opts);

  // Structures to try, restricted to the modeled parameters.
  std::vector<std::pair<std::vector<ParamSet>, std::vector<bool>>> structures;
  if (deps) {
    std::vector<ParamSet> groups;
    std::vector<bool> mult;
    ParamSet covered;
    auto restrict_to = [&](const ParamSet& g) {
      ParamSet r;
      for (const auto& p : g)
        if (std::find(modeled.begin(), modeled.end(), p) != modeled.end()) r.insert(p);
      return r;
    };
    for (const auto& g : deps->structure.multiplicative) {
      ParamSet r = restrict_to(g);
      if (r.empty()) continue;
      groups.push_back(r);
      mult.push_back(r.size() >= 2);
      covered.insert(r.begin(), r.end());
    }
    for (const auto& p : modeled)
      if (!covered.count(p)) {
        groups.push_back({p});
        mult.push_back(false);
      }
    // A parameter in several multiplicative groups would repeat its terms; keep the first group's view.
    structures.push_back({groups, mult});
  } else {
    std::vector<ParamSet> additive;
    for (const auto& p : modeled) additive.push_back({p});
    structures.push_back({additive, std::vector<bool>(additive.size(), false)});
    if (modeled.size() >= 2)
      structures.push_back({{ParamSet(modeled.begin(), modeled.end())}, {true}});
  }

  Best best;
  for (const auto& [groups, mult] : structures) best.offer(combine(pts, groups, mult, top));
  if (!best.model) {
    std::size_t need = 1;
    for (const auto& p : modeled) need *= static_cast<std::size_t>(opts.space.n) + 2;
    throw UnderdeterminedError("underdetermined: no hypothesis could be fitted for " + data.function + " on " +
                               std::to_string(pts.size()) + " configurations; a full design over {" +
                               join(ParamSet(modeled.begin(), modeled.end())) + "} needs " + std::to_string(need));
  }
  PerfModel m = std::move(*best.model);
  m.params = modeled;
  return m;
}

// ---------------------------------------------------------------------------
// JSON

namespace {
using nlohmann::json;

json model_json(const PerfModel& m) {
  json terms = json::array();
  for (const auto& t : m.hypothesis.terms) {
    json fs = json::array();
    for (const auto& f : t.factors) fs.push_back({{"param", f.param}, {"i", f.i.str()}, {"j", f.j}});
    terms.push_back(fs);
  }
  return json{{"formula", m.formula()},
              {"constant", m.is_constant()},
              {"params", m.params},
              {"terms", terms},
              {"coefficients", m.coefficients},
              {"y_scale", m.y_scale},
              {"smape", m.stats.smape},
              {"rss", m.stats.rss},
              {"adj_r2", m.stats.adj_r2}};
}

Rational parse_rational(const std::string& s) {
  auto slash = s.find('/');
  if (slash == std::string::npos) return Rational(std::stoi(s));
  return Rational(std::stoi(s.substr(0, slash)), std::stoi(s.substr(slash + 1)));
}
}  // namespace

std::string to_json(const PerfModel& model) { return model_json(model).dump(); }

PerfModel model_from_json(const std::string& text) {
  json j = json::parse(text);
  PerfModel m;
  for (const auto& t : j.at("terms")) {
    Term term;
    for (const auto& f : t)
      term.factors.push_back({f.at("param").get<std::string>(), parse_rational(f.at("i").get<std::string>()),
                              f.at("j").get<int>()});
    m.hypothesis.terms.push_back(std::move(term));
  }
  m.coefficients = j.at("coefficients").get<std::vector<double>>();
  m.params = j.value("params", std::vector<std::string>{});
  m.y_scale = j.value("y_scale", 1.0);
  m.stats.smape = j.value("smape", 0.0);
  m.stats.rss = j.value("rss", 0.0);
  m.stats.adj_r2 = j.value("adj_r2", 0.0);
  return m;
}

}  // namespace taintperf::pmnf
