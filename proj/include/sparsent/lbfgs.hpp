#pragma once

#include <cmath>
#include <cstddef>
#include <deque>
#include <functional>
#include <numeric>
#include <vector>

namespace sparsent::opt {

// f(x, grad) → objective; fills grad.
using Objective = std::function<double(const std::vector<double>&, std::vector<double>&)>;

struct LbfgsConfig {
  std::size_t history = 10;
  std::size_t max_iter = 200;
  double tol = 1e-5;  // on ||g|| / max(1, ||x||)
  double armijo = 1e-4;
  std::size_t max_backtracks = 40;
};

enum class LbfgsStatus { Converged, MaxIterations, LineSearchFailed };

struct LbfgsResult {
  LbfgsStatus status = LbfgsStatus::MaxIterations;
  std::size_t iterations = 0;
  double value = 0.0;
  double gradient_norm = 0.0;
  std::vector<double> trace;  // objective after each accepted step, starting with f(x0)
};

namespace detail {
inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}
inline double norm(const std::vector<double>& a) { return std::sqrt(dot(a, a)); }
}  // namespace detail

// Limited-memory BFGS with a backtracking Armijo line search. Every accepted step
// strictly decreases f. Deterministic: no threading, fixed summation order.
inline LbfgsResult minimize(const Objective& f, std::vector<double>& x, const LbfgsConfig& cfg = {}) {
  using detail::dot;
  using detail::norm;
  const std::size_t n = x.size();
  LbfgsResult res;
  std::vector<double> g(n), g_new(n), x_new(n), d(n);
  double fx = f(x, g);
  res.trace.push_back(fx);

  std::deque<std::vector<double>> s_hist, y_hist;
  std::deque<double> rho_hist;
  std::vector<double> alpha(cfg.history);

  for (;;) {
    res.value = fx;
    res.gradient_norm = norm(g);
    if (n == 0 || res.gradient_norm / std::max(1.0, norm(x)) < cfg.tol) {
      res.status = LbfgsStatus::Converged;
      return res;
    }
    if (res.iterations >= cfg.max_iter) {
      res.status = LbfgsStatus::MaxIterations;
      return res;
    }

    // Two-loop recursion: d = -H g.
    d = g;
    const std::size_t m = s_hist.size();
    for (std::size_t i = m; i-- > 0;) {
      alpha[i] = rho_hist[i] * dot(s_hist[i], d);
      for (std::size_t j = 0; j < n; ++j) d[j] -= alpha[i] * y_hist[i][j];
    }
    if (m > 0) {
      const double gamma = dot(s_hist.back(), y_hist.back()) / dot(y_hist.back(), y_hist.back());
      for (auto& v : d) v *= gamma;
    }
    for (std::size_t i = 0; i < m; ++i) {
      const double beta = rho_hist[i] * dot(y_hist[i], d);
      for (std::size_t j = 0; j < n; ++j) d[j] += s_hist[i][j] * (alpha[i] - beta);
    }
    for (auto& v : d) v = -v;

    double slope = dot(g, d);
    if (slope >= 0) {
      // Not a descent direction; restart from steepest descent.
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
      for (std::size_t j = 0; j < n; ++j) d[j] = -g[j];
      slope = dot(g, d);
    }

    double step = m == 0 ? 1.0 / std::max(1.0, res.gradient_norm) : 1.0;
    bool accepted = false;
    double f_new = fx;
    for (std::size_t bt = 0; bt < cfg.max_backtracks; ++bt) {
      for (std::size_t j = 0; j < n; ++j) x_new[j] = x[j] + step * d[j];
      f_new = f(x_new, g_new);
      if (std::isfinite(f_new) && f_new <= fx + cfg.armijo * step * slope && f_new < fx) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      res.status = LbfgsStatus::LineSearchFailed;
      return res;
    }

    std::vector<double> s(n), y(n);
    for (std::size_t j = 0; j < n; ++j) {
      s[j] = x_new[j] - x[j];
      y[j] = g_new[j] - g[j];
    }
    const double sy = dot(s, y);
    if (sy > 1e-12 * norm(s) * norm(y)) {
      if (s_hist.size() == cfg.history) {
        s_hist.pop_front();
        y_hist.pop_front();
        rho_hist.pop_front();
      }
      s_hist.push_back(std::move(s));
      y_hist.push_back(std::move(y));
      rho_hist.push_back(1.0 / sy);
    }
    x.swap(x_new);
    g.swap(g_new);
    fx = f_new;
    ++res.iterations;
    res.trace.push_back(fx);
  }
}

}  // namespace sparsent::opt
