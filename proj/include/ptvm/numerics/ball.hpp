#pragma once

// Ball arithmetic: an MPFR midpoint at a working precision plus a radius that
// bounds the distance to the true value. The radius is a long double so that
// it stays representable at working precisions of several thousand bits.

#include <mpfr.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <string>
#include <utility>

#include "ptvm/numerics/errors.hpp"
#include "ptvm/numerics/surd.hpp"

namespace ptvm::num {

struct PrecisionConfig {
  int significant_bits = 64;
  int guard_bits = 32;
  int max_escalations = 8;
  int escalation = 0;  // how many times the guard bits have been doubled

  [[nodiscard]] int working_bits() const { return significant_bits + guard_bits; }
  // The unescalated model drops the guard bits before comparing; once escalated
  // the guard bits count too, otherwise widening could never decide anything.
  [[nodiscard]] int comparison_bits() const {
    return escalation == 0 ? significant_bits : working_bits();
  }

  void validate() const {
    if (significant_bits < 8) throw NumericError("significant_bits must be at least 8");
    if (guard_bits < 0) throw NumericError("guard_bits must be non-negative");
    if (max_escalations < 0) throw NumericError("max_escalations must be non-negative");
  }

  // Guard bits may be overridden through PTM_GUARD_BITS.
  static PrecisionConfig from_env() {
    PrecisionConfig c;
    if (const char* g = std::getenv("PTM_GUARD_BITS")) {
      char* end = nullptr;
      const long v = std::strtol(g, &end, 10);
      if (end == g || *end != '\0' || v < 0 || v > 1'000'000) {
        throw NumericError(std::string("invalid PTM_GUARD_BITS: ") + g);
      }
      c.guard_bits = static_cast<int>(v);
    }
    return c;
  }

  // Escalation k doubles the guard bits k times (starting from at least one bit).
  [[nodiscard]] PrecisionConfig escalated(int k) const {
    PrecisionConfig c = *this;
    long g = std::max(guard_bits, 1);
    for (int i = 0; i < k; ++i) g *= 2;
    c.guard_bits = static_cast<int>(std::min<long>(g, 1'000'000));
    c.escalation = escalation + k;
    return c;
  }
};

class Mpfr {
 public:
  explicit Mpfr(mpfr_prec_t prec = 64) {
    mpfr_init2(v_, prec);
    mpfr_set_zero(v_, 1);
  }
  Mpfr(const Mpfr& o) {
    mpfr_init2(v_, mpfr_get_prec(o.v_));
    mpfr_set(v_, o.v_, MPFR_RNDN);
  }
  Mpfr(Mpfr&& o) noexcept {
    mpfr_init2(v_, MPFR_PREC_MIN);
    mpfr_swap(v_, o.v_);
  }
  Mpfr& operator=(const Mpfr& o) {
    if (this != &o) {
      mpfr_set_prec(v_, mpfr_get_prec(o.v_));
      mpfr_set(v_, o.v_, MPFR_RNDN);
    }
    return *this;
  }
  Mpfr& operator=(Mpfr&& o) noexcept {
    mpfr_swap(v_, o.v_);
    return *this;
  }
  ~Mpfr() { mpfr_clear(v_); }

  mpfr_ptr get() { return v_; }
  [[nodiscard]] mpfr_srcptr get() const { return v_; }
  [[nodiscard]] mpfr_prec_t prec() const { return mpfr_get_prec(v_); }
  [[nodiscard]] long double magnitude() const {  // rounded away from zero
    return std::fabs(mpfr_get_ld(v_, MPFR_RNDA));
  }
  [[nodiscard]] long double value() const { return mpfr_get_ld(v_, MPFR_RNDN); }

 private:
  mpfr_t v_;
};

class Ball {
 public:
  Ball() = default;
  Ball(Mpfr mid, long double rad) : mid_(std::move(mid)), rad_(rad) {}

  static Ball exact(const Rational& q, mpfr_prec_t prec) {
    Mpfr m(prec);
    const int t = mpfr_set_q(m.get(), q.get_mpq_t(), MPFR_RNDN);
    return Ball(std::move(m), t == 0 ? 0.0L : ulp_bound(m_abs(q), prec));
  }

  static Ball from_surd(const Surd& s, mpfr_prec_t prec) {
    if (s.is_zero()) return Ball(Mpfr(prec), 0.0L);
    if (s.is_rational()) return exact(s.rational_value(), prec);
    Mpfr sum(prec);
    Mpfr term(prec);
    Mpfr root(prec);
    long double mag = 0.0L;
    bool inexact = false;
    for (const auto& t : s.terms()) {
      const Rational c = t.coef.q();
      int tern = mpfr_set_q(term.get(), c.get_mpq_t(), MPFR_RNDN);
      if (t.radicand != 1) {
        tern |= mpfr_sqrt_ui(root.get(), t.radicand, MPFR_RNDN);
        tern |= mpfr_mul(term.get(), term.get(), root.get(), MPFR_RNDN);
      }
      tern |= mpfr_add(sum.get(), sum.get(), term.get(), MPFR_RNDN);
      inexact = inexact || tern != 0;
      mag += term.magnitude();
    }
    const long double n = static_cast<long double>(s.terms().size());
    const long double rad = inexact ? inflate(mag * (4.0L + 2.0L * n) * pow2(-prec)) : 0.0L;
    return Ball(std::move(sum), rad);
  }

  [[nodiscard]] const Mpfr& mid() const { return mid_; }
  [[nodiscard]] long double rad() const { return rad_; }
  [[nodiscard]] mpfr_prec_t prec() const { return mid_.prec(); }
  [[nodiscard]] long double mid_ld() const { return mid_.value(); }
  [[nodiscard]] long double mag() const { return mid_.magnitude(); }

  friend Ball add(const Ball& a, const Ball& b, mpfr_prec_t prec, bool subtract) {
    Mpfr m(prec);
    const int t = subtract ? mpfr_sub(m.get(), a.mid_.get(), b.mid_.get(), MPFR_RNDN)
                           : mpfr_add(m.get(), a.mid_.get(), b.mid_.get(), MPFR_RNDN);
    long double r = a.rad_ + b.rad_;
    if (t != 0) r += m.magnitude() * pow2(1 - prec);
    return Ball(std::move(m), inflate(r));
  }

  friend Ball mul(const Ball& a, const Ball& b, mpfr_prec_t prec) {
    Mpfr m(prec);
    const int t = mpfr_mul(m.get(), a.mid_.get(), b.mid_.get(), MPFR_RNDN);
    long double r = a.mag() * b.rad_ + b.mag() * a.rad_ + a.rad_ * b.rad_;
    if (t != 0) r += m.magnitude() * pow2(1 - prec);
    return Ball(std::move(m), inflate(r));
  }

  friend Ball mul_q(const Ball& a, const Rational& q, mpfr_prec_t prec) {
    Mpfr m(prec);
    const int t = mpfr_mul_q(m.get(), a.mid_.get(), q.get_mpq_t(), MPFR_RNDN);
    long double r = a.rad_ * m_abs(q);
    if (t != 0) r += m.magnitude() * pow2(1 - prec);
    return Ball(std::move(m), inflate(r));
  }

  // Caller guarantees the divisor ball excludes zero.
  friend Ball div(const Ball& a, const Ball& b, mpfr_prec_t prec) {
    const long double bl = b.mid_.magnitude() - b.rad_;
    if (!(bl > 0)) throw PrecisionExhausted("divisor ball contains zero");
    Mpfr m(prec);
    const int t = mpfr_div(m.get(), a.mid_.get(), b.mid_.get(), MPFR_RNDN);
    long double r = (a.rad_ + m.magnitude() * b.rad_) / bl;
    if (t != 0) r += m.magnitude() * pow2(1 - prec);
    return Ball(std::move(m), inflate(r));
  }

  friend Ball div_ui(const Ball& a, unsigned long n, mpfr_prec_t prec) {
    Mpfr m(prec);
    const int t = mpfr_div_ui(m.get(), a.mid_.get(), n, MPFR_RNDN);
    long double r = a.rad_ / static_cast<long double>(n);
    if (t != 0) r += m.magnitude() * pow2(1 - prec);
    return Ball(std::move(m), inflate(r));
  }

  // Caller guarantees the ball lies strictly above zero.
  friend Ball sqrt(const Ball& a, mpfr_prec_t prec) {
    const long double lo = a.mid_ld() - a.rad_;
    if (!(lo > 0)) throw PrecisionExhausted("square root argument ball touches zero");
    Mpfr m(prec);
    const int t = mpfr_sqrt(m.get(), a.mid_.get(), MPFR_RNDN);
    long double r = a.rad_ / std::sqrt(lo);
    if (t != 0) r += m.magnitude() * pow2(1 - prec);
    return Ball(std::move(m), inflate(r));
  }

  Ball neg() const {
    Ball out = *this;
    mpfr_neg(out.mid_.get(), out.mid_.get(), MPFR_RNDN);
    return out;
  }

  static long double pow2(long e) { return std::ldexp(1.0L, static_cast<int>(e)); }

  static long double inflate(long double r) {
    return r == 0 ? 0.0L : r * (1.0L + 0x1p-56L) + 0x1p-16000L;
  }

 private:
  Mpfr mid_;
  long double rad_ = 0.0L;

  static long double m_abs(const Rational& q) {
    return std::fabs(static_cast<long double>(q.get_d())) * (1.0L + 0x1p-50L);
  }
  static long double ulp_bound(long double mag, mpfr_prec_t prec) {
    return inflate(mag * pow2(1 - prec));
  }
};

Ball add(const Ball& a, const Ball& b, mpfr_prec_t prec, bool subtract = false);
Ball mul(const Ball& a, const Ball& b, mpfr_prec_t prec);
Ball mul_q(const Ball& a, const Rational& q, mpfr_prec_t prec);
Ball div(const Ball& a, const Ball& b, mpfr_prec_t prec);
Ball div_ui(const Ball& a, unsigned long n, mpfr_prec_t prec);
Ball sqrt(const Ball& a, mpfr_prec_t prec);

// Certified three-way comparison of two balls under a significant-bit budget:
// a strict verdict requires the balls to be separated by more than the rounding
// of both midpoints to `sig` bits. Returns 0 when undecided.
inline int ball_separation(const Ball& a, const Ball& b, int sig) {
  const mpfr_prec_t p = std::max(a.prec(), b.prec()) + 2;
  Mpfr d(p);
  mpfr_sub(d.get(), a.mid().get(), b.mid().get(), MPFR_RNDN);
  const long double gap = d.magnitude();
  const long double slack = (a.rad() + b.rad()) * (1.0L + 0x1p-50L) +
                            (a.mag() + b.mag()) * Ball::pow2(-sig) +
                            d.magnitude() * Ball::pow2(1 - p);
  if (gap > slack) return mpfr_sgn(d.get()) > 0 ? 1 : -1;
  return 0;
}

}  // namespace ptvm::num
