#include "haanet/gradcheck_suite.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <stdexcept>

#include "haanet/gradcheck.hpp"
#include "haanet/haam.hpp"
#include "haanet/losses.hpp"
#include "haanet/mfem.hpp"
#include "haanet/net.hpp"
#include "haanet/ops.hpp"
#include "haanet/rng.hpp"

namespace haanet {
namespace {

using T = Tensor<double>;
using V = Var<double>;

constexpr double kPrimitiveTol = 1e-6;
constexpr double kModuleTol = 1e-4;
constexpr double kBackboneTol = 1e-3;
constexpr double kLossTol = 1e-5;
constexpr double kIdentityTol = 1e-12;
// The loss gradient has entries near 1e-7; a wider step keeps round-off in
// the quotient below them.
constexpr double kLossStep = 1e-5;

T away_from_zero(const Shape& s, Rng& rng);

T uniform(const Shape& s, Rng& rng, double lo, double hi) {
  T t(s);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

// Magnitudes in [0.1, 1] with random sign: keeps kinks at zero out of reach.
T away_from_zero(const Shape& s, Rng& rng) {
  T t(s);
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double m = rng.uniform(0.1, 1.0);
    t[i] = rng.uniform() < 0.5 ? -m : m;
  }
  return t;
}

// Random linear functional turning any output into a scalar. Weights are
// bounded away from zero so no output element has a vanishing gradient,
// which would leave only round-off in the relative error.
V project(const V& y, std::uint64_t seed) {
  Rng rng(seed);
  return sum(mul(y, y.tape().constant(away_from_zero(y.shape(), rng))));
}

void jitter(const std::string&, T& p, Rng& rng, double scale) {
  for (std::size_t i = 0; i < p.size(); ++i) p[i] += rng.uniform(-scale, scale);
}

class Collector {
 public:
  Collector(std::string module, double tol) : module_(std::move(module)), tol_(tol) {}

  void record(const std::string& group, double error) {
    auto [it, fresh] = worst_.emplace(group, error);
    if (!fresh) it->second = std::max(it->second, error);
    if (fresh) order_.push_back(group);
  }

  void append_to(GradcheckReport& report) const {
    for (const std::string& g : order_) {
      report.groups.push_back({module_, g, worst_.at(g), tol_});
    }
  }

 private:
  std::string module_;
  double tol_;
  std::map<std::string, double> worst_;
  std::vector<std::string> order_;
};

// Checks every named parameter of a model plus the model input.
void check_model(Collector& out, const std::function<void(const ParamVisitor<double>&)>& visit,
                 const std::function<V(Tape<double>&, const V&)>& forward, const T& input,
                 const std::function<std::string(const std::string&)>& group_of,
                 std::size_t max_elements) {
  out.record("input", finite_diff_check(forward, input));
  T x = input;
  visit([&](const std::string& name, T& param) {
    const double err = finite_diff_check_param(
        [&](Tape<double>& tape) { return forward(tape, tape.constant(x)); }, param, 1e-6,
        max_elements);
    out.record(group_of(name), err);
  });
}

std::string segment(const std::string& name, std::size_t index) {
  std::size_t start = 0;
  for (std::size_t i = 0; i < index; ++i) {
    start = name.find('.', start);
    if (start == std::string::npos) return name;
    ++start;
  }
  const std::size_t end = name.find('.', start);
  return name.substr(start, end == std::string::npos ? std::string::npos : end - start);
}

void primitives(GradcheckReport& report) {
  Collector out("primitives", kPrimitiveTol);
  Rng rng(101);
  const Shape s{2, 3, 4, 5};
  const T a = uniform(s, rng, -1, 1);
  const T b = uniform(s, rng, 0.5, 1.5);
  const T col = uniform({2, 3, 1, 1}, rng, 0.5, 1.5);
  auto unary = [&](const char* name, const T& x, std::function<V(const V&)> op) {
    out.record(name, finite_diff_check(
                         [&](Tape<double>&, const V& v) { return project(op(v), 7); }, x));
  };
  auto binary = [&](const char* name, const T& x, const T& y,
                    std::function<V(const V&, const V&)> op) {
    T lhs = x;
    T rhs = y;
    auto f = [&](Tape<double>& tape) { return project(op(tape.leaf(lhs), tape.leaf(rhs)), 9); };
    out.record(name, std::max(finite_diff_check_param(f, lhs), finite_diff_check_param(f, rhs)));
  };
  binary("add", a, b, [](const V& x, const V& y) { return add(x, y); });
  binary("sub", a, b, [](const V& x, const V& y) { return sub(x, y); });
  binary("mul", a, b, [](const V& x, const V& y) { return mul(x, y); });
  binary("div", a, b, [](const V& x, const V& y) { return div(x, y); });
  binary("mul.broadcast", a, col, [](const V& x, const V& y) { return mul(x, y); });
  binary("div.broadcast", a, col, [](const V& x, const V& y) { return div(x, y); });
  binary("channel_scale", a, uniform({1, 3, 1, 1}, rng, -1, 1),
         [](const V& x, const V& y) { return channel_scale(x, y); });
  unary("affine", a, [](const V& x) { return affine(x, -1.5, 0.25); });
  unary("mean", a, [](const V& x) { return affine(mean(x), 3.0, 0.0); });
  unary("sum", a, [](const V& x) { return mul(sum(x), sum(x)); });
  unary("reduce_mean_spatial", a, [](const V& x) { return reduce_mean_spatial(x); });
  unary("broadcast_spatial", col, [](const V& x) { return broadcast_spatial(x, 3, 4); });
  const T kinked = away_from_zero(s, rng);
  unary("abs", kinked, [](const V& x) { return abs(x); });
  unary("relu", kinked, [](const V& x) { return relu(x); });
  unary("clamp", kinked, [](const V& x) { return clamp(x, -0.5, 0.5); });
  unary("sigmoid", a, [](const V& x) { return sigmoid(x); });
  unary("tanh", a, [](const V& x) { return tanh(x); });
  for (int k : {1, 3}) {
    for (int stride : {1, 2}) {
      const ConvSpec spec{3, 4, k, stride};
      T w = uniform(spec.weight_shape(), rng, -0.5, 0.5);
      T bias = uniform(spec.bias_shape(), rng, -0.5, 0.5);
      T x = a;
      auto f = [&](Tape<double>& tape) {
        return project(conv2d(tape.leaf(x), tape.leaf(w), tape.leaf(bias), stride), 11);
      };
      const double err = std::max({finite_diff_check_param(f, x), finite_diff_check_param(f, w),
                                   finite_diff_check_param(f, bias)});
      out.record("conv2d.k" + std::to_string(k) + "s" + std::to_string(stride), err);
    }
  }
  for (int k : {3, 5, 7}) {
    unary(("avg_pool.k" + std::to_string(k)).c_str(), a,
          [k](const V& x) { return avg_pool(x, PoolSpec::window(k)); });
  }
  unary("avg_pool.global", a, [](const V& x) { return avg_pool(x, PoolSpec::whole()); });
  unary("upsample_nearest", a, [](const V& x) { return upsample_nearest(x); });
  {
    T x = a;
    T gamma = uniform({1, 3, 1, 1}, rng, 0.5, 1.5);
    T beta = uniform({1, 3, 1, 1}, rng, -0.5, 0.5);
    auto f = [&](Tape<double>& tape) {
      return project(channel_norm(tape.leaf(x), tape.leaf(gamma), tape.leaf(beta)), 13);
    };
    out.record("channel_norm", std::max({finite_diff_check_param(f, x),
                                         finite_diff_check_param(f, gamma),
                                         finite_diff_check_param(f, beta)}));
  }
  out.append_to(report);
}

void haam(GradcheckReport& report) {
  Collector out("haam", kModuleTol);
  Rng rng(202);
  HaamWeights<double> w = HaamWeights<double>::init(8, 17);
  const T x = uniform({1, 8, 6, 6}, rng, -1, 1);
  check_model(
      out, [&](const ParamVisitor<double>& fn) { w.visit("haam", fn); },
      [&](Tape<double>&, const V& v) { return project(haam_forward(v, w), 19); }, x,
      [](const std::string& name) { return segment(name, 1); }, 0);
  out.append_to(report);
}

void mfem(GradcheckReport& report) {
  Rng rng(303);
  MfemWeights<double> w = MfemWeights<double>::init(8);
  const T x = uniform({1, 8, 7, 9}, rng, -1, 1);
  {
    Collector identity("mfem", kIdentityTol);
    Tape<double> tape;
    const V y = mfem_forward(tape.constant(x), w);
    double worst = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      worst = std::max(worst, std::abs(y.value()[i] - x[i]));
    }
    identity.record("identity_at_init", worst);
    identity.append_to(report);
  }
  Collector out("mfem", kModuleTol);
  w.visit("mfem", [&](const std::string& n, T& p) { jitter(n, p, rng, 0.5); });
  check_model(
      out, [&](const ParamVisitor<double>& fn) { w.visit("mfem", fn); },
      [&](Tape<double>&, const V& v) { return project(mfem_forward(v, w), 23); }, x,
      [](const std::string& name) { return segment(name, 1); }, 0);
  out.append_to(report);
}

void backbone(GradcheckReport& report) {
  Collector out("backbone", kBackboneTol);
  Rng rng(404);
  NetWeights<double> w = NetWeights<double>::init(NetConfig::desk(), 29);
  // Move off the symmetric initialization so every branch carries gradient.
  w.visit([&](const std::string& n, T& p) { jitter(n, p, rng, 0.1); });
  const T x = uniform({1, 3, 8, 8}, rng, 0.3, 0.7);
  check_model(
      out, [&](const ParamVisitor<double>& fn) { w.visit(fn); },
      [&](Tape<double>&, const V& v) { return project(net_forward(v, w), 31); }, x,
      [](const std::string& name) { return segment(name, 0); }, 6);
  out.append_to(report);
}

void loss(GradcheckReport& report) {
  Collector out("loss", kLossTol);
  Rng rng(505);
  CrExtractor<double> ext = CrExtractor<double>::make(37);
  const T gt = uniform({1, 3, 16, 16}, rng, 0.0, 1.0);
  const T hazy = uniform({1, 3, 16, 16}, rng, 0.0, 1.0);
  T pred = gt;
  // Offsets of at least 0.05 keep L1 away from its ties with gt.
  const T offset = away_from_zero(gt.shape(), rng);
  for (std::size_t i = 0; i < pred.size(); ++i) pred[i] += 0.5 * offset[i];
  out.record("l1", finite_diff_check(
                       [&](Tape<double>& tape, const V& p) {
                         return l1_loss(p, tape.constant(gt));
                       },
                       pred, kLossStep));
  out.record("cr", finite_diff_check(
                       [&](Tape<double>&, const V& p) { return cr_loss(p, gt, hazy, ext); },
                       pred, kLossStep));
  out.record("total", finite_diff_check(
                          [&](Tape<double>&, const V& p) {
                            return total_loss(p, gt, hazy, 0.2, ext);
                          },
                          pred, kLossStep));
  out.append_to(report);
}

const std::map<std::string, void (*)(GradcheckReport&)>& suites() {
  static const std::map<std::string, void (*)(GradcheckReport&)> table = {
      {"primitives", primitives}, {"haam", haam}, {"mfem", mfem},
      {"backbone", backbone},     {"loss", loss}};
  return table;
}

}  // namespace

bool GradcheckReport::passed() const {
  return std::all_of(groups.begin(), groups.end(),
                     [](const GradcheckGroup& g) { return g.passed(); });
}

const std::vector<std::string>& gradcheck_modules() {
  static const std::vector<std::string> names = {"primitives", "haam", "mfem", "backbone",
                                                 "loss"};
  return names;
}

GradcheckReport run_gradcheck(const std::string& module) {
  GradcheckReport report;
  if (module == "all") {
    for (const std::string& name : gradcheck_modules()) suites().at(name)(report);
    return report;
  }
  const auto it = suites().find(module);
  if (it == suites().end()) {
    throw std::invalid_argument("unknown gradcheck module '" + module + "'");
  }
  it->second(report);
  return report;
}

}  // namespace haanet
