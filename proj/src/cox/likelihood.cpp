#include <algorithm>
#include <cassert>
#include <cmath>
#include <numeric>

#include "survwright/cox.hpp"
#include "survwright/kernels.hpp"

namespace survwright::cox {

RiskSetIndex RiskSetIndex::build(const OutcomeColumn& outcome) {
  RiskSetIndex idx;
  const std::size_t n = outcome.size();
  idx.order.resize(n);
  std::iota(idx.order.begin(), idx.order.end(), 0);
  std::stable_sort(idx.order.begin(), idx.order.end(), [&](std::size_t a, std::size_t b) {
    if (outcome.duration[a] != outcome.duration[b]) return outcome.duration[a] > outcome.duration[b];
    return outcome.event[a] > outcome.event[b];
  });
  for (std::size_t i = 0; i < n;) {
    RiskSetIndex::Group g;
    g.begin = i;
    g.time = outcome.duration[idx.order[i]];
    while (i < n && outcome.duration[idx.order[i]] == g.time) {
      g.deaths += outcome.event[idx.order[i]];
      ++i;
    }
    g.end = i;
    idx.total_events += g.deaths;
    idx.groups.push_back(g);
  }
  return idx;
}

LogLik partial_loglik(std::span<const double> beta, const Matrix& x, const OutcomeColumn& outcome, Ties ties,
                      bool with_hessian) {
  return partial_loglik(beta, x, RiskSetIndex::build(outcome), ties, with_hessian);
}

LogLik partial_loglik(std::span<const double> beta, const Matrix& x, const RiskSetIndex& index, Ties ties,
                      bool with_hessian) {
  if (index.total_events == 0) throw Error("no_events", "no events");
  const std::size_t n = x.rows();
  const std::size_t p = x.cols();
  assert(beta.size() == p && index.order.size() == n);

  std::vector<double> eta(n);
  for (std::size_t i = 0; i < n; ++i) eta[i] = kernels::dot(x.row(i), beta);
  const double shift = n ? *std::max_element(eta.begin(), eta.end()) : 0.0;

  LogLik out;
  out.gradient.assign(p, 0.0);
  if (with_hessian) out.hessian = Matrix(p, p);

  double s0 = 0.0;
  std::vector<double> s1(p, 0.0);
  Matrix s2(with_hessian ? p : 0, with_hessian ? p : 0);
  std::vector<double> d1(p), tmp1(p);
  Matrix d2(with_hessian ? p : 0, with_hessian ? p : 0);

  // Upper triangle of acc += w * xi xi^T.
  auto rank1 = [p](Matrix& acc, double w, std::span<const double> xi) {
    for (std::size_t a = 0; a < p; ++a) {
      if (xi[a] == 0.0) continue;
      kernels::axpy(w * xi[a], xi.subspan(a), acc.row(a).subspan(a));
    }
  };

  for (const auto& g : index.groups) {
    double d0 = 0.0;
    std::fill(d1.begin(), d1.end(), 0.0);
    if (with_hessian && g.deaths) std::fill(d2.flat().begin(), d2.flat().end(), 0.0);

    for (std::size_t k = g.begin; k < g.end; ++k) {
      const std::size_t i = index.order[k];
      const double w = std::exp(eta[i] - shift);
      const auto xi = x.row(i);
      s0 += w;
      kernels::axpy(w, xi, s1);
      if (with_hessian) rank1(s2, w, xi);
      if (k - g.begin < g.deaths) {  // deaths are ordered first in each group
        d0 += w;
        kernels::axpy(w, xi, d1);
        if (with_hessian) rank1(d2, w, xi);
        out.value += eta[i];
        kernels::axpy(1.0, xi, out.gradient);
      }
    }
    if (g.deaths == 0) continue;

    const double d = static_cast<double>(g.deaths);
    for (std::size_t l = 0; l < g.deaths; ++l) {
      const double frac = ties == Ties::efron ? static_cast<double>(l) / d : 0.0;
      const double r0 = s0 - frac * d0;
      for (std::size_t a = 0; a < p; ++a) tmp1[a] = s1[a] - frac * d1[a];
      out.value -= std::log(r0) + shift;
      kernels::axpy(-1.0 / r0, tmp1, out.gradient);
      if (with_hessian) {
        const double inv = 1.0 / r0;
        for (std::size_t a = 0; a < p; ++a) {
          auto h = out.hessian.row(a).subspan(a);
          kernels::axpy(-inv, s2.row(a).subspan(a), h);
          if (frac != 0.0) kernels::axpy(frac * inv, d2.row(a).subspan(a), h);
          kernels::axpy(tmp1[a] * inv * inv, std::span<const double>(tmp1).subspan(a), h);
        }
      }
    }
  }
  if (with_hessian) {
    for (std::size_t a = 0; a < p; ++a) {
      for (std::size_t b = a + 1; b < p; ++b) out.hessian(b, a) = out.hessian(a, b);
    }
  }
  return out;
}

EtaLogLik partial_loglik_eta(std::span<const double> eta, const RiskSetIndex& index, Ties ties) {
  if (index.total_events == 0) throw Error("no_events", "no events");
  const std::size_t n = eta.size();
  assert(index.order.size() == n);
  const double shift = n ? *std::max_element(eta.begin(), eta.end()) : 0.0;

  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) w[i] = std::exp(eta[i] - shift);

  // a_k = sum_l 1/r0_l, b_k = sum_l (l/d)/r0_l per group
  std::vector<double> a(index.groups.size(), 0.0), b(index.groups.size(), 0.0);
  EtaLogLik out;
  double s0 = 0.0;
  for (std::size_t gi = 0; gi < index.groups.size(); ++gi) {
    const auto& g = index.groups[gi];
    double d0 = 0.0;
    for (std::size_t k = g.begin; k < g.end; ++k) {
      const std::size_t i = index.order[k];
      s0 += w[i];
      if (k - g.begin < g.deaths) {
        d0 += w[i];
        out.value += eta[i];
      }
    }
    const double d = static_cast<double>(g.deaths);
    for (std::size_t l = 0; l < g.deaths; ++l) {
      const double frac = ties == Ties::efron ? static_cast<double>(l) / d : 0.0;
      const double r0 = s0 - frac * d0;
      out.value -= std::log(r0) + shift;
      a[gi] += 1.0 / r0;
      b[gi] += frac / r0;
    }
  }

  out.gradient.assign(n, 0.0);
  double cumulative = 0.0;
  for (std::size_t gi = index.groups.size(); gi-- > 0;) {  // increasing time
    const auto& g = index.groups[gi];
    cumulative += a[gi];
    for (std::size_t k = g.begin; k < g.end; ++k) {
      const std::size_t i = index.order[k];
      const bool died = k - g.begin < g.deaths;
      out.gradient[i] = (died ? 1.0 : 0.0) - w[i] * (cumulative - (died ? b[gi] : 0.0));
    }
  }
  return out;
}

double StepFunction::operator()(double t) const {
  auto it = std::upper_bound(times.begin(), times.end(), t);
  if (it == times.begin()) return 0.0;
  return values[static_cast<std::size_t>(it - times.begin()) - 1];
}

StepFunction breslow_cumhaz(std::span<const double> eta, const OutcomeColumn& outcome) {
  const auto index = RiskSetIndex::build(outcome);
  StepFunction f;
  std::vector<std::pair<double, double>> jumps;  // descending time
  double s0 = 0.0;
  for (const auto& g : index.groups) {
    for (std::size_t k = g.begin; k < g.end; ++k) s0 += std::exp(eta[index.order[k]]);
    if (g.deaths) jumps.emplace_back(g.time, static_cast<double>(g.deaths) / s0);
  }
  double h = 0.0;
  for (auto it = jumps.rbegin(); it != jumps.rend(); ++it) {
    h += it->second;
    f.times.push_back(it->first);
    f.values.push_back(h);
  }
  return f;
}

}  // namespace survwright::cox
