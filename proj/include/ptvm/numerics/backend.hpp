#pragma once

// The two numeric backends the Transformer is instantiated with.
//
//  ExactBackend  values live in the exact field (see surd.hpp); a cached double
//                enclosure lets most decisions skip exact work.
//  FloatBackend  every value is a ball at significant+guard bits. Strict
//                decisions require the balls to separate; equality is only
//                asserted when the exact shadow value confirms it. Anything
//                else raises PrecisionExhausted.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "ptvm/numerics/ball.hpp"
#include "ptvm/numerics/surd.hpp"

namespace ptvm::num {

// A double interval mid +- rad that encloses whatever object the backend
// certifies decisions on.
struct Approx {
  double mid = 0.0;
  double rad = 0.0;
};

// The double enclosure is computed on first use; an ExactNum is therefore not
// safe to read from two threads before that.
class ExactNum {
 public:
  ExactNum() = default;
  explicit ExactNum(Surd v) : v_(std::move(v)), ready_(v_.is_zero()) {}
  [[nodiscard]] const Surd& value() const { return v_; }
  [[nodiscard]] Approx approx() const {
    fill();
    return {a_, e_};
  }
  [[nodiscard]] const Surd& exact() const { return v_; }
  [[nodiscard]] double to_double() const {
    fill();
    return a_;
  }

 private:
  void fill() const {
    if (ready_) return;
    const auto [a, e] = v_.approx();
    a_ = a;
    e_ = e;
    ready_ = true;
  }
  Surd v_;
  mutable double a_ = 0.0;
  mutable double e_ = 0.0;
  mutable bool ready_ = true;
};

// p_i = 1 - ((i+1)(i+2)+1) / (sqrt((i+1)^2+1) sqrt((i+2)^2+1))
inline Surd positional_value(std::uint64_t i) {
  const std::uint64_t a = (i + 1) * (i + 1) + 1;
  const std::uint64_t b = (i + 2) * (i + 2) + 1;
  const std::uint64_t c = (i + 1) * (i + 2) + 1;
  const std::uint64_t ab = detail::checked_mul(a, b);
  Rational coef(mpz_class(static_cast<unsigned long>(c)), mpz_class(static_cast<unsigned long>(ab)));
  coef.canonicalize();
  return Surd(1) - Surd::radical(coef, ab);
}

// Exact layer normalisation z / ||z||; the zero vector maps to zero. A single
// component reduces to its sign, so only multi-component inputs need a root.
inline std::vector<Surd> exact_layer_norm(const std::vector<Surd>& z) {
  std::vector<Surd> out(z.size());
  if (z.size() == 1) {
    out[0] = Surd(static_cast<long>(z[0].sign()));
    return out;
  }
  Surd n2;
  for (const auto& v : z) n2 = n2 + v * v;
  if (n2.is_zero()) return out;
  const Surd norm = Surd::sqrt_of(n2);
  for (std::size_t i = 0; i < z.size(); ++i) out[i] = z[i] / norm;
  return out;
}

template <class N>
struct Weighted {
  const N* value;
  long num;
  unsigned long den;
};

class ExactBackend {
 public:
  using Num = ExactNum;

  [[nodiscard]] static std::string name() { return "exact"; }

  [[nodiscard]] Num constant(const Rational& q) const { return Num(Surd(q)); }
  [[nodiscard]] Num from_surd(const Surd& s) const { return Num(s); }
  [[nodiscard]] Num zero() const { return Num(); }
  [[nodiscard]] Num add(const Num& a, const Num& b) const { return Num(a.value() + b.value()); }
  [[nodiscard]] Num sub(const Num& a, const Num& b) const { return Num(a.value() - b.value()); }
  [[nodiscard]] Num mul(const Num& a, const Num& b) const { return Num(a.value() * b.value()); }
  [[nodiscard]] Num scale(const Num& a, const Rational& q) const { return Num(a.value().scaled(q)); }
  [[nodiscard]] Num div_count(const Num& a, std::uint64_t n) const {
    return Num(a.value().scaled(Rational(1, static_cast<unsigned long>(n))));
  }
  // bias + sum of weight * value with small integer weights.
  [[nodiscard]] Num linear(long bias_num, unsigned long bias_den,
                           const std::vector<Weighted<Num>>& parts) const {
    std::vector<Surd::Scaled> s;
    s.reserve(parts.size());
    for (const auto& p : parts) s.push_back({&p.value->value(), p.num, p.den});
    return Num(Surd::linear(bias_num, bias_den, s));
  }

  [[nodiscard]] int sign(const Num& a) const {
    const Approx x = a.approx();
    if (x.mid - x.rad > 0) return 1;
    if (x.mid + x.rad < 0) return -1;
    return a.value().sign();
  }
  [[nodiscard]] int compare(const Num& a, const Num& b) const {
    const Approx x = a.approx();
    const Approx y = b.approx();
    if (x.mid - x.rad > y.mid + y.rad) return 1;
    if (x.mid + x.rad < y.mid - y.rad) return -1;
    if (x.rad == 0 && y.rad == 0 && x.mid == y.mid) return 0;
    return ptvm::num::compare(a.value(), b.value());
  }
  [[nodiscard]] Num relu(const Num& a) const { return sign(a) > 0 ? a : Num(); }

  [[nodiscard]] std::vector<Num> layer_norm(const std::vector<Num>& z) const {
    std::vector<Surd> s;
    s.reserve(z.size());
    for (const auto& v : z) s.push_back(v.value());
    std::vector<Num> out;
    out.reserve(z.size());
    if (z.size() == 1) {
      out.emplace_back(Surd(static_cast<long>(sign(z[0]))));
      return out;
    }
    for (auto& v : exact_layer_norm(s)) out.emplace_back(std::move(v));
    return out;
  }

  [[nodiscard]] Num positional(std::uint64_t i) const { return Num(positional_value(i)); }

  [[nodiscard]] static Approx approx(const Num& a) { return a.approx(); }
  [[nodiscard]] static double slack(double) { return 0.0; }
  [[nodiscard]] static const Surd& exact(const Num& a) { return a.value(); }
};

class FloatNum {
 public:
  FloatNum() = default;
  FloatNum(Ball b, ExactNum shadow) : ball_(std::move(b)), shadow_(std::move(shadow)) {}
  [[nodiscard]] const Ball& ball() const { return ball_; }
  [[nodiscard]] const ExactNum& shadow() const { return shadow_; }
  [[nodiscard]] const Surd& exact() const { return shadow_.value(); }
  [[nodiscard]] double to_double() const { return static_cast<double>(ball_.mid_ld()); }

 private:
  Ball ball_;
  ExactNum shadow_;
};

class FloatBackend {
 public:
  using Num = FloatNum;

  explicit FloatBackend(PrecisionConfig cfg = {}) : cfg_(cfg), prec_(cfg.working_bits()) {
    cfg_.validate();
  }

  [[nodiscard]] static std::string name() { return "float"; }
  [[nodiscard]] const PrecisionConfig& config() const { return cfg_; }

  [[nodiscard]] Num constant(const Rational& q) const {
    return Num(Ball::exact(q, prec_), ExactNum(Surd(q)));
  }
  [[nodiscard]] Num from_surd(const Surd& s) const {
    return Num(Ball::from_surd(s, prec_), ExactNum(s));
  }
  [[nodiscard]] Num zero() const { return Num(Ball(Mpfr(prec_), 0.0L), ExactNum()); }
  [[nodiscard]] Num add(const Num& a, const Num& b) const {
    return Num(ptvm::num::add(a.ball(), b.ball(), prec_),
               ExactNum(a.exact() + b.exact()));
  }
  [[nodiscard]] Num sub(const Num& a, const Num& b) const {
    return Num(ptvm::num::add(a.ball(), b.ball(), prec_, true),
               ExactNum(a.exact() - b.exact()));
  }
  [[nodiscard]] Num mul(const Num& a, const Num& b) const {
    return Num(ptvm::num::mul(a.ball(), b.ball(), prec_), ExactNum(a.exact() * b.exact()));
  }
  [[nodiscard]] Num scale(const Num& a, const Rational& q) const {
    return Num(mul_q(a.ball(), q, prec_), ExactNum(a.exact().scaled(q)));
  }
  [[nodiscard]] Num div_count(const Num& a, std::uint64_t n) const {
    return Num(div_ui(a.ball(), n, prec_),
               ExactNum(a.exact().scaled(Rational(1, static_cast<unsigned long>(n)))));
  }

  [[nodiscard]] Num linear(long bias_num, unsigned long bias_den,
                           const std::vector<Weighted<Num>>& parts) const {
    Ball acc = bias_num == 0 ? Ball(Mpfr(prec_), 0.0L)
                             : Ball::exact(Rational(bias_num, bias_den), prec_);
    std::vector<Surd::Scaled> s;
    s.reserve(parts.size());
    for (const auto& p : parts) {
      const Ball& b = p.value->ball();
      if (p.num == 1 && p.den == 1) {
        acc = ptvm::num::add(acc, b, prec_);
      } else if (p.num == -1 && p.den == 1) {
        acc = ptvm::num::add(acc, b, prec_, true);
      } else {
        acc = ptvm::num::add(acc, mul_q(b, Rational(p.num, p.den), prec_), prec_);
      }
      s.push_back({&p.value->exact(), p.num, p.den});
    }
    return Num(std::move(acc), ExactNum(Surd::linear(bias_num, bias_den, s)));
  }

  [[nodiscard]] int compare(const Num& a, const Num& b) const {
    const int s = ball_separation(a.ball(), b.ball(), cfg_.comparison_bits());
    if (s != 0) return s;
    if (a.exact() == b.exact()) return 0;
    throw PrecisionExhausted("comparison undecided at " +
                             std::to_string(cfg_.significant_bits) + "+" +
                             std::to_string(cfg_.guard_bits) + " bits");
  }
  [[nodiscard]] int sign(const Num& a) const {
    static const Ball zero_ball;
    const int s = ball_separation(a.ball(), zero_ball, cfg_.comparison_bits());
    if (s != 0) return s;
    if (a.exact().is_zero()) return 0;
    throw PrecisionExhausted("sign undecided at " + std::to_string(cfg_.significant_bits) +
                             "+" + std::to_string(cfg_.guard_bits) + " bits");
  }
  [[nodiscard]] Num relu(const Num& a) const { return sign(a) > 0 ? a : zero(); }

  [[nodiscard]] std::vector<Num> layer_norm(const std::vector<Num>& z) const {
    std::vector<Num> out;
    out.reserve(z.size());
    if (z.size() == 1) {
      out.push_back(constant(Rational(sign(z[0]))));
      return out;
    }
    bool all_zero = true;
    for (const auto& v : z) all_zero = all_zero && v.exact().is_zero();
    Ball n2(Mpfr(prec_), 0.0L);
    for (const auto& v : z) n2 = ptvm::num::add(n2, ptvm::num::mul(v.ball(), v.ball(), prec_), prec_);
    if (all_zero) {
      for (std::size_t i = 0; i < z.size(); ++i) out.push_back(zero());
      return out;
    }
    const Ball norm = ptvm::num::sqrt(n2, prec_);
    std::vector<Surd> s;
    s.reserve(z.size());
    for (const auto& v : z) s.push_back(v.exact());
    auto ex = exact_layer_norm(s);
    for (std::size_t i = 0; i < z.size(); ++i) {
      out.emplace_back(ptvm::num::div(z[i].ball(), norm, prec_), ExactNum(std::move(ex[i])));
    }
    return out;
  }

  [[nodiscard]] Num positional(std::uint64_t i) const { return from_surd(positional_value(i)); }

  [[nodiscard]] static Approx approx(const Num& a) {
    const long double m = a.ball().mid_ld();
    const double d = static_cast<double>(m);
    const long double r = a.ball().rad() + std::fabs(m - static_cast<long double>(d));
    if (r == 0) return {d, 0.0};
    return {d, std::max(static_cast<double>(r * (1.0L + 0x1p-50L)), 0x1p-1000)};
  }
  [[nodiscard]] double slack(double mag) const {
    return mag * std::ldexp(1.0, -cfg_.comparison_bits()) * 2.0 + 0x1p-1000;
  }
  [[nodiscard]] static const Surd& exact(const Num& a) { return a.exact(); }

 private:
  PrecisionConfig cfg_;
  mpfr_prec_t prec_;
};

}  // namespace ptvm::num
