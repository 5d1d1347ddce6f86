#pragma once

// Rational coefficient with an inline small form. Almost every coefficient the
// construction produces has numerator and denominator far below 2^62, so those
// live in two int64 words and only overflow spills to mpq_class. The form is
// unique (small whenever it fits), which keeps equality and hashing structural.

#include <gmpxx.h>

#include <cmath>
#include <cstdint>
#include <memory>
#include <numeric>
#include <string>

namespace ptvm::num {

using Rational = mpq_class;

class Coef {
 public:
  Coef() = default;
  Coef(long v) : n_(v) {  // NOLINT(google-explicit-constructor)
    if (v >= kMax || v <= -kMax) *this = from_q(Rational(v));
  }
  // mpq_class(n, d) does not reduce, so callers may hand us n/d unreduced
  explicit Coef(const Rational& q) {
    Rational c(q);
    c.canonicalize();
    *this = from_q(c);
  }

  static Coef from_u64(std::uint64_t v) {
    if (v < static_cast<std::uint64_t>(kMax)) return Coef(static_cast<long>(v));
    return from_q(Rational(mpz_class(static_cast<unsigned long>(v))));
  }

  // num / den, reduced.
  static Coef frac(long num, unsigned long den) {
    return from_i128(static_cast<__int128>(num), static_cast<__int128>(den));
  }

  [[nodiscard]] bool is_small() const { return !big_; }
  [[nodiscard]] long small_num() const { return n_; }
  [[nodiscard]] long small_den() const { return d_; }
  [[nodiscard]] bool is_zero() const { return !big_ && n_ == 0; }
  [[nodiscard]] int sign() const {
    if (big_) return sgn(*big_);
    return (n_ > 0) - (n_ < 0);
  }

  [[nodiscard]] Rational q() const {
    if (big_) return *big_;
    Rational r;
    mpz_set_si(r.get_num_mpz_t(), n_);
    mpz_set_si(r.get_den_mpz_t(), d_);
    return r;
  }

  // Double within a relative 2^-51; exact is set when no rounding happened.
  [[nodiscard]] double get_d(bool* exact = nullptr) const {
    if (big_) {
      const double d = big_->get_d();
      if (exact) *exact = false;
      return d;
    }
    const bool pow2 = (d_ & (d_ - 1)) == 0;
    const bool fits = n_ < (1L << 53) && n_ > -(1L << 53);
    if (exact) *exact = pow2 && fits;
    if (pow2) return std::ldexp(static_cast<double>(n_), -__builtin_ctzl(static_cast<unsigned long>(d_)));
    return static_cast<double>(n_) / static_cast<double>(d_);
  }

  friend Coef operator+(const Coef& a, const Coef& b) {
    if (!a.big_ && !b.big_) {
      if (a.d_ == b.d_) return from_i128(static_cast<__int128>(a.n_) + b.n_, a.d_);
      return from_i128(static_cast<__int128>(a.n_) * b.d_ + static_cast<__int128>(b.n_) * a.d_,
                       static_cast<__int128>(a.d_) * b.d_);
    }
    return from_q(a.q() + b.q());
  }
  friend Coef operator-(const Coef& a, const Coef& b) { return a + (-b); }
  Coef operator-() const {
    if (big_) return from_q(-*big_);
    Coef out = *this;
    out.n_ = -n_;
    return out;
  }
  friend Coef operator*(const Coef& a, const Coef& b) {
    if (!a.big_ && !b.big_) {
      if (a.d_ == 1 && b.d_ == 1) return from_i128(static_cast<__int128>(a.n_) * b.n_, 1);
      return from_i128(static_cast<__int128>(a.n_) * b.n_, static_cast<__int128>(a.d_) * b.d_);
    }
    return from_q(a.q() * b.q());
  }
  [[nodiscard]] Coef inverse() const {
    if (big_) return from_q(1 / *big_);
    Coef out;
    out.n_ = n_ < 0 ? -d_ : d_;
    out.d_ = n_ < 0 ? -n_ : n_;
    return out;
  }
  // this * num / den
  [[nodiscard]] Coef scaled(long num, unsigned long den) const {
    if (num == 1 && den == 1) return *this;
    if (!big_) {
      return from_i128(static_cast<__int128>(n_) * num, static_cast<__int128>(d_) * static_cast<__int128>(den));
    }
    Rational r;
    mpz_mul_si(r.get_num_mpz_t(), big_->get_num_mpz_t(), num);
    mpz_mul_ui(r.get_den_mpz_t(), big_->get_den_mpz_t(), den);
    r.canonicalize();
    return from_q(r);
  }

  friend bool operator==(const Coef& a, const Coef& b) {
    if (a.big_ || b.big_) return a.big_ && b.big_ && *a.big_ == *b.big_;
    return a.n_ == b.n_ && a.d_ == b.d_;
  }
  friend bool operator!=(const Coef& a, const Coef& b) { return !(a == b); }
  friend int cmp(const Coef& a, const Coef& b) {
    if (!a.big_ && !b.big_) {
      const __int128 l = static_cast<__int128>(a.n_) * b.d_;
      const __int128 r = static_cast<__int128>(b.n_) * a.d_;
      return (l > r) - (l < r);
    }
    return cmp(a.q(), b.q());
  }

  [[nodiscard]] std::size_t hash() const {
    if (big_) {
      std::size_t h = 0x51ed27;
      mix(h, hash_z(big_->get_num()));
      mix(h, hash_z(big_->get_den()));
      return h;
    }
    std::size_t h = static_cast<std::size_t>(n_);
    mix(h, static_cast<std::size_t>(d_));
    return h;
  }

  [[nodiscard]] std::string str() const {
    if (big_) return big_->get_str();
    return d_ == 1 ? std::to_string(n_) : std::to_string(n_) + "/" + std::to_string(d_);
  }

 private:
  // Strict bound on |num| and den in the small form, so that cross products and their
  // sums stay inside 128 bits.
  static constexpr long kMax = (1L << 62);

  long n_ = 0;
  long d_ = 1;
  std::shared_ptr<const Rational> big_;  // immutable, so copies may share

  static void mix(std::size_t& h, std::size_t v) { h ^= v + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2); }
  static std::size_t hash_z(const mpz_class& z) {
    std::size_t h = static_cast<std::size_t>(mpz_sgn(z.get_mpz_t()) + 1);
    const std::size_t n = mpz_size(z.get_mpz_t());
    for (std::size_t i = 0; i < n; ++i) mix(h, mpz_getlimbn(z.get_mpz_t(), i));
    return h;
  }

  static unsigned __int128 gcd128(unsigned __int128 a, unsigned __int128 b) {
    if ((a >> 64) == 0 && (b >> 64) == 0) {
      return std::gcd(static_cast<std::uint64_t>(a), static_cast<std::uint64_t>(b));
    }
    while (b != 0) {
      const unsigned __int128 t = a % b;
      a = b;
      b = t;
    }
    return a;
  }

  static mpz_class to_mpz(unsigned __int128 v) {
    mpz_class hi(static_cast<unsigned long>(v >> 64));
    mpz_class lo(static_cast<unsigned long>(v));
    mpz_class out;
    mpz_mul_2exp(out.get_mpz_t(), hi.get_mpz_t(), 64);
    out += lo;
    return out;
  }

  // d > 0
  static Coef from_i128(__int128 n, __int128 d) {
    if (n == 0) return Coef();
    const bool neg = n < 0;
    unsigned __int128 un = neg ? -static_cast<unsigned __int128>(n) : static_cast<unsigned __int128>(n);
    unsigned __int128 ud = static_cast<unsigned __int128>(d);
    if (ud != 1) {
      const unsigned __int128 g = gcd128(un, ud);
      if (g != 1) {
        un /= g;
        ud /= g;
      }
    }
    if (un < static_cast<unsigned __int128>(kMax) && ud < static_cast<unsigned __int128>(kMax)) {
      Coef out;
      out.n_ = neg ? -static_cast<long>(un) : static_cast<long>(un);
      out.d_ = static_cast<long>(ud);
      return out;
    }
    Rational r(to_mpz(un), to_mpz(ud));
    if (neg) r = -r;
    Coef out;
    out.big_ = std::make_shared<const Rational>(std::move(r));
    return out;
  }

  static Coef from_q(const Rational& q) {
    const mpz_srcptr num = q.get_num_mpz_t();
    const mpz_srcptr den = q.get_den_mpz_t();
    if (mpz_sizeinbase(num, 2) <= 62 && mpz_sizeinbase(den, 2) <= 62) {
      Coef out;
      out.n_ = mpz_get_si(num);
      out.d_ = mpz_get_si(den);
      return out;
    }
    Coef out;
    out.big_ = std::make_shared<const Rational>(q);
    return out;
  }
};

}  // namespace ptvm::num
