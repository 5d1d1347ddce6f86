#pragma once

// Exact arithmetic in the field generated by the rationals and square roots of
// square-free integers. A value is stored as sum_k c_k * sqrt(r_k) with distinct
// square-free radicands r_k (r = 1 is the rational part) and nonzero rational
// coefficients. Square roots of distinct square-free integers are linearly
// independent over Q, so this form is canonical: zero tests and equality are
// structural, and only sign determination needs approximation.

#include <gmpxx.h>

#include <boost/container/small_vector.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <ostream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "ptvm/numerics/coef.hpp"
#include "ptvm/numerics/errors.hpp"

namespace ptvm::num {

namespace detail {

struct SquarefreeSplit {
  std::uint64_t root = 0;  // n == root * root * core
  std::uint64_t core = 0;
};

inline std::uint64_t isqrt_u64(std::uint64_t n) {
  auto r = static_cast<std::uint64_t>(std::sqrt(static_cast<long double>(n)));
  while (r > 0 && static_cast<unsigned __int128>(r) * r > n) --r;
  while (static_cast<unsigned __int128>(r + 1) * (r + 1) <= n) ++r;
  return r;
}

inline std::uint64_t checked_mul(std::uint64_t a, std::uint64_t b) {
  std::uint64_t out = 0;
  if (__builtin_mul_overflow(a, b, &out)) {
    throw Unrepresentable("radicand exceeds 64 bits");
  }
  return out;
}

inline SquarefreeSplit squarefree_split_uncached(std::uint64_t n) {
  SquarefreeSplit s{1, 1};
  if (n == 0) return {0, 0};
  std::uint64_t m = n;
  // After removing every prime p with p^3 <= m, what remains has at most two
  // prime factors: 1, q, q*q or q*r.
  for (std::uint64_t p = 2; p * p * p <= m; p += (p == 2 ? 1 : 2)) {
    if (m % p != 0) continue;
    int e = 0;
    while (m % p == 0) {
      m /= p;
      ++e;
    }
    for (int k = 0; k < e / 2; ++k) s.root *= p;
    if (e % 2) s.core *= p;
  }
  const std::uint64_t r = isqrt_u64(m);
  if (r * r == m) {
    s.root *= r;
  } else {
    s.core *= m;
  }
  return s;
}

inline SquarefreeSplit squarefree_split(std::uint64_t n) {
  thread_local std::unordered_map<std::uint64_t, SquarefreeSplit> cache;
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;
  SquarefreeSplit s = squarefree_split_uncached(n);
  if (cache.size() > (1u << 20)) cache.clear();
  cache.emplace(n, s);
  return s;
}

inline std::uint64_t to_u64(const mpz_class& z) {
  if (sgn(z) < 0 || !mpz_fits_ulong_p(z.get_mpz_t())) {
    throw Unrepresentable("integer does not fit in 64 bits");
  }
  return mpz_get_ui(z.get_mpz_t());
}

inline void hash_mix(std::size_t& h, std::size_t v) {
  h ^= v + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
}

inline std::size_t hash_mpz(const mpz_class& z) {
  std::size_t h = static_cast<std::size_t>(mpz_sgn(z.get_mpz_t()) + 1);
  const std::size_t n = mpz_size(z.get_mpz_t());
  for (std::size_t i = 0; i < n; ++i) hash_mix(h, mpz_getlimbn(z.get_mpz_t(), i));
  return h;
}

}  // namespace detail

class Surd {
 public:
  struct Term {
    std::uint64_t radicand;
    Coef coef;
  };
  // most values have one or two terms; keep those off the heap
  using Terms = boost::container::small_vector<Term, 2>;

  Surd() = default;
  Surd(long v) {  // NOLINT(google-explicit-constructor)
    if (v != 0) terms_.push_back({1, Coef(v)});
  }
  Surd(const Rational& q) {  // NOLINT(google-explicit-constructor)
    if (sgn(q) != 0) terms_.push_back({1, Coef(q)});
  }

  static Surd fraction(long num, long den) {
    if (den == 0) throw DivisionByZero();
    Surd out;
    if (num != 0) {
      out.terms_.push_back({1, den < 0 ? Coef::frac(-num, static_cast<unsigned long>(-den))
                                       : Coef::frac(num, static_cast<unsigned long>(den))});
    }
    return out;
  }

  // coef * sqrt(n) for a non-negative integer n.
  static Surd radical(const Rational& coef, std::uint64_t n) {
    Surd out;
    if (n == 0 || sgn(coef) == 0) return out;
    const auto s = detail::squarefree_split(n);
    out.terms_.push_back({s.core, Coef(coef) * Coef::from_u64(s.root)});
    return out;
  }

  // Exact square root. Defined for non-negative rationals only.
  static Surd sqrt_of(const Surd& x) {
    if (!x.is_rational()) {
      throw Unrepresentable("square root of an irrational value");
    }
    if (x.is_zero()) return Surd();
    const Coef& c = x.terms_[0].coef;
    if (c.sign() < 0) throw NegativeSqrt();
    std::uint64_t num = 0;
    std::uint64_t den = 0;
    if (c.is_small()) {
      num = static_cast<std::uint64_t>(c.small_num());
      den = static_cast<std::uint64_t>(c.small_den());
    } else {
      const Rational q = c.q();
      num = detail::to_u64(q.get_num());
      den = detail::to_u64(q.get_den());
    }
    const auto a = detail::squarefree_split(num);
    const auto b = detail::squarefree_split(den);
    // sqrt(a.root^2 a.core / (b.root^2 b.core)) = a.root / (b.root b.core) * sqrt(a.core b.core)
    const Coef coef = Coef::from_u64(a.root) * (Coef::from_u64(b.root) * Coef::from_u64(b.core)).inverse();
    Surd out;
    out.terms_.push_back({detail::checked_mul(a.core, b.core), coef});
    return out;
  }

  [[nodiscard]] bool is_zero() const { return terms_.empty(); }
  [[nodiscard]] bool is_rational() const {
    return terms_.empty() || (terms_.size() == 1 && terms_[0].radicand == 1);
  }
  [[nodiscard]] Rational rational_value() const {
    if (terms_.empty()) return Rational(0);
    if (!is_rational()) throw Unrepresentable("value is irrational");
    return terms_[0].coef.q();
  }
  [[nodiscard]] const Terms& terms() const { return terms_; }

  [[nodiscard]] int sign() const {
    if (terms_.empty()) return 0;
    if (terms_.size() == 1) return terms_[0].coef.sign();
    if (terms_.size() == 2) {
      const int s0 = terms_[0].coef.sign();
      const int s1 = terms_[1].coef.sign();
      if (s0 == s1) return s0;
      // compare c0^2 r0 against c1^2 r1
      const Coef l = terms_[0].coef * terms_[0].coef * Coef::from_u64(terms_[0].radicand);
      const Coef r = terms_[1].coef * terms_[1].coef * Coef::from_u64(terms_[1].radicand);
      return cmp(l, r) > 0 ? s0 : s1;
    }
    return refine_sign();
  }

  // Nearest-ish double and a rigorous bound on its absolute error.
  [[nodiscard]] std::pair<double, double> approx() const {
    if (terms_.empty()) return {0.0, 0.0};
    if (terms_.size() == 1 && terms_[0].radicand == 1) {
      bool exact = false;
      const double d = terms_[0].coef.get_d(&exact);
      if (exact) return {d, 0.0};
      return {d, std::abs(d) * 0x1p-51 + 0x1p-1000};
    }
    double sum = 0.0;
    double mag = 0.0;
    for (const auto& t : terms_) {
      double v = t.coef.get_d();
      if (t.radicand != 1) v *= std::sqrt(static_cast<double>(t.radicand));
      sum += v;
      mag += std::abs(v);
    }
    const double n = static_cast<double>(terms_.size());
    return {sum, mag * (8.0 + n) * 0x1p-53 + 0x1p-1000};
  }

  [[nodiscard]] double to_double() const { return approx().first; }

  friend Surd operator+(const Surd& a, const Surd& b) { return combine(a, b, false); }
  friend Surd operator-(const Surd& a, const Surd& b) { return combine(a, b, true); }
  Surd operator-() const {
    Surd out = *this;
    for (auto& t : out.terms_) t.coef = -t.coef;
    return out;
  }

  friend Surd operator*(const Surd& a, const Surd& b) {
    if (a.terms_.empty() || b.terms_.empty()) return Surd();
    if (a.is_rational()) return b.scaled_by(a.terms_[0].coef);
    if (b.is_rational()) return a.scaled_by(b.terms_[0].coef);
    Terms acc;
    acc.reserve(a.terms_.size() * b.terms_.size());
    for (const auto& x : a.terms_) {
      for (const auto& y : b.terms_) {
        const std::uint64_t g = std::gcd(x.radicand, y.radicand);
        const std::uint64_t r = detail::checked_mul(x.radicand / g, y.radicand / g);
        Coef c = x.coef * y.coef;
        if (g != 1) c = c * Coef::from_u64(g);
        acc.push_back({r, std::move(c)});
      }
    }
    return from_unsorted(std::move(acc));
  }

  // Division is supported by single-term divisors, which is all the
  // construction needs (normalisation by a square root, averaging by a count).
  friend Surd operator/(const Surd& a, const Surd& b) {
    if (b.terms_.empty()) throw DivisionByZero();
    if (b.terms_.size() != 1) {
      throw Unrepresentable("division by a sum of radicals");
    }
    const auto& t = b.terms_[0];
    // x / (c sqrt r) = x * sqrt(r) / (c r)
    const Coef inv = (t.coef * Coef::from_u64(t.radicand)).inverse();
    if (t.radicand == 1) return a.scaled_by(inv);
    Surd m;
    m.terms_.push_back({t.radicand, inv});
    return a * m;
  }

  // bias + sum of num/den * value, formed in one pass.
  struct Scaled {
    const Surd* value;
    long num;
    unsigned long den;
  };
  static Surd linear(long bias_num, unsigned long bias_den, const std::vector<Scaled>& parts) {
    bool rational = true;
    for (const auto& p : parts) rational = rational && p.value->is_rational();
    if (rational) {
      Coef acc = Coef::frac(bias_num, bias_den);
      for (const auto& p : parts) {
        if (p.value->is_zero()) continue;
        acc = acc + p.value->terms_[0].coef.scaled(p.num, p.den);
      }
      Surd out;
      if (!acc.is_zero()) out.terms_.push_back({1, std::move(acc)});
      return out;
    }
    Terms all;
    if (bias_num != 0) all.push_back({1, Coef::frac(bias_num, bias_den)});
    for (const auto& p : parts) {
      for (const auto& t : p.value->terms_) all.push_back({t.radicand, t.coef.scaled(p.num, p.den)});
    }
    return from_unsorted(std::move(all));
  }

  [[nodiscard]] Surd scaled(const Rational& q) const { return scaled_by(Coef(q)); }
  [[nodiscard]] Surd scaled_by(const Coef& q) const {
    Surd out;
    if (q.is_zero()) return out;
    out.terms_.reserve(terms_.size());
    for (const auto& t : terms_) out.terms_.push_back({t.radicand, t.coef * q});
    return out;
  }

  friend bool operator==(const Surd& a, const Surd& b) {
    if (a.terms_.size() != b.terms_.size()) return false;
    for (std::size_t i = 0; i < a.terms_.size(); ++i) {
      if (a.terms_[i].radicand != b.terms_[i].radicand) return false;
      if (a.terms_[i].coef != b.terms_[i].coef) return false;
    }
    return true;
  }
  friend bool operator!=(const Surd& a, const Surd& b) { return !(a == b); }

  [[nodiscard]] std::size_t hash() const {
    std::size_t h = terms_.size();
    for (const auto& t : terms_) {
      detail::hash_mix(h, std::hash<std::uint64_t>{}(t.radicand));
      detail::hash_mix(h, t.coef.hash());
    }
    return h;
  }

  [[nodiscard]] std::string str() const {
    if (terms_.empty()) return "0";
    std::string out;
    for (std::size_t i = 0; i < terms_.size(); ++i) {
      if (i) out += " + ";
      out += terms_[i].coef.str();
      if (terms_[i].radicand != 1) out += "*sqrt(" + std::to_string(terms_[i].radicand) + ")";
    }
    return out;
  }
  friend std::ostream& operator<<(std::ostream& os, const Surd& s) { return os << s.str(); }

 private:
  Terms terms_;

  static Surd combine(const Surd& a, const Surd& b, bool negate_b) {
    Surd out;
    out.terms_.reserve(a.terms_.size() + b.terms_.size());
    std::size_t i = 0;
    std::size_t j = 0;
    while (i < a.terms_.size() || j < b.terms_.size()) {
      if (j == b.terms_.size() ||
          (i < a.terms_.size() && a.terms_[i].radicand < b.terms_[j].radicand)) {
        out.terms_.push_back(a.terms_[i++]);
      } else if (i == a.terms_.size() || b.terms_[j].radicand < a.terms_[i].radicand) {
        out.terms_.push_back(b.terms_[j]);
        if (negate_b) out.terms_.back().coef = -out.terms_.back().coef;
        ++j;
      } else {
        Coef c = negate_b ? a.terms_[i].coef - b.terms_[j].coef : a.terms_[i].coef + b.terms_[j].coef;
        if (!c.is_zero()) out.terms_.push_back({a.terms_[i].radicand, std::move(c)});
        ++i;
        ++j;
      }
    }
    return out;
  }

  static Surd from_unsorted(Terms acc) {
    std::sort(acc.begin(), acc.end(),
              [](const Term& x, const Term& y) { return x.radicand < y.radicand; });
    Surd out;
    for (auto& t : acc) {
      if (!out.terms_.empty() && out.terms_.back().radicand == t.radicand) {
        out.terms_.back().coef = out.terms_.back().coef + t.coef;
        if (out.terms_.back().coef.is_zero()) out.terms_.pop_back();
      } else if (!t.coef.is_zero()) {
        out.terms_.push_back(std::move(t));
      }
    }
    return out;
  }

  // Isolating-interval refinement: bound every sqrt(r) between consecutive
  // multiples of 2^-k and double k until the interval excludes zero.
  [[nodiscard]] int refine_sign() const {
    for (unsigned long k = 64; k <= (1ul << 22); k *= 2) {
      Rational lo(0);
      Rational hi(0);
      mpz_class scale;
      mpz_ui_pow_ui(scale.get_mpz_t(), 2, k);
      for (const auto& t : terms_) {
        const Rational c = t.coef.q();
        if (t.radicand == 1) {
          lo += c;
          hi += c;
          continue;
        }
        mpz_class s = mpz_class(static_cast<unsigned long>(t.radicand)) * scale * scale;
        mpz_sqrt(s.get_mpz_t(), s.get_mpz_t());
        Rational a(s, scale);
        Rational b(s + 1, scale);
        a.canonicalize();
        b.canonicalize();
        if (sgn(c) > 0) {
          lo += c * a;
          hi += c * b;
        } else {
          lo += c * b;
          hi += c * a;
        }
      }
      if (sgn(lo) > 0) return 1;
      if (sgn(hi) < 0) return -1;
    }
    throw PrecisionExhausted("sign refinement did not separate a nonzero value");
  }
};

inline int compare(const Surd& a, const Surd& b) { return (a - b).sign(); }

struct SurdHash {
  std::size_t operator()(const Surd& s) const { return s.hash(); }
};

}  // namespace ptvm::num
