#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "ptvm/numerics/backend.hpp"
#include "ptvm/numerics/coef.hpp"
#include "ptvm/numerics/scalar.hpp"
#include "ptvm/numerics/surd.hpp"

using namespace ptvm::num;

namespace {

Scalar unit(long k) { return Scalar(k) / sqrt(Scalar(k * k + 1)); }
Scalar unit_one(long k) { return Scalar(1) / sqrt(Scalar(k * k + 1)); }

Scalar p_scalar(long i) {
  const long a = (i + 1) * (i + 1) + 1;
  const long b = (i + 2) * (i + 2) + 1;
  const long c = (i + 1) * (i + 2) + 1;
  return Scalar(1) - Scalar(c) / (sqrt(Scalar(a)) * sqrt(Scalar(b)));
}

// q * sqrt(r), r > 0 and not necessarily squarefree.
struct Radical {
  Rational q;
  mpz_class r;
};

// sign(a + b sqrt(m)) using squares only.
int sign_mixed(const Rational& a, const Rational& b, const mpz_class& m) {
  if (mpz_perfect_square_p(m.get_mpz_t())) {
    mpz_class s;
    mpz_sqrt(s.get_mpz_t(), m.get_mpz_t());
    return sgn(a + b * Rational(s));
  }
  const int sa = sgn(a);
  const int sb = sgn(b);
  if (sb == 0) return sa;
  if (sa == 0 || sa == sb) return sb;
  const Rational lhs = a * a;
  const Rational rhs = b * b * Rational(m);
  return lhs > rhs ? sa : (lhs < rhs ? sb : 0);
}

int sign_pair(const Radical& x, const Radical& y) {
  const int sx = sgn(x.q);
  const int sy = sgn(y.q);
  if (sy == 0) return sx;
  if (sx == 0 || sx == sy) return sx == 0 ? sy : sx;
  const Rational lx = x.q * x.q * Rational(x.r);
  const Rational ly = y.q * y.q * Rational(y.r);
  return lx > ly ? sx : (lx < ly ? sy : 0);
}

// sign((t1 + t2) - t3) by clearing roots.
int oracle_sign(const Radical& t1, const Radical& t2, const Radical& t3) {
  const int sx = sign_pair(t1, t2);
  const int sy = sgn(t3.q);
  if (sx >= 0 && sy <= 0) return (sx == 0 && sy == 0) ? 0 : 1;
  if (sx <= 0 && sy >= 0) return -1;
  const Rational a = t1.q * t1.q * Rational(t1.r) + t2.q * t2.q * Rational(t2.r) - t3.q * t3.q * Rational(t3.r);
  const Rational b = 2 * t1.q * t2.q;
  const int s = sign_mixed(a, b, t1.r * t2.r);
  return sx > 0 ? s : -s;
}

struct Term {
  Radical rad;
  Scalar expr;
};

Term random_term(std::mt19937_64& rng) {
  std::uniform_int_distribution<long> kd(0, 1000);
  const long sgnv = (rng() & 1) ? 1 : -1;
  const long k = kd(rng);
  const long l = kd(rng);
  const mpz_class rk = k * k + 1;
  const mpz_class rl = l * l + 1;
  switch (rng() % 5) {
    case 0: {
      const long n = std::uniform_int_distribution<long>(-5, 5)(rng);
      const long d = std::uniform_int_distribution<long>(1, 7)(rng);
      return {{Rational(n, d), 1}, Scalar::fraction(n, d)};
    }
    case 1: return {{Rational(sgnv * k, rk), rk}, Scalar(sgnv) * unit(k)};
    case 2: return {{Rational(sgnv, rk), rk}, Scalar(sgnv) * unit_one(k)};
    case 3: {
      Rational q(mpz_class(sgnv * k) * l, rk * rl);
      q.canonicalize();
      return {{q, rk * rl}, Scalar(sgnv) * unit(k) * unit(l)};
    }
    default: {
      Rational q(mpz_class(sgnv * k), rk * rl);
      q.canonicalize();
      return {{q, rk * rl}, Scalar(sgnv) * unit(k) * unit_one(l)};
    }
  }
}

}  // namespace

TEST(Scalar, SqrtOfZeroIsZero) {
  EXPECT_TRUE(sqrt(Scalar(0)).exact().is_zero());
  EXPECT_EQ(certified_compare(sqrt(Scalar(0)), Scalar(0)), Ordering::Equal);
}

TEST(Scalar, HalfFromRoots) {
  const Scalar r = Scalar(1) / sqrt(Scalar(2));
  const Surd v = (r * r).exact();
  ASSERT_TRUE(v.is_rational());
  EXPECT_EQ(v.rational_value(), Rational(1, 2));
  EXPECT_EQ(certified_compare(r * r, Scalar::fraction(1, 2)), Ordering::Equal);
}

TEST(Scalar, UnitVectorSelfProduct) {
  const Scalar x = Scalar(0) / sqrt(Scalar(1));
  const Scalar y = Scalar(1) / sqrt(Scalar(1));
  EXPECT_EQ(certified_compare(x * x + y * y, Scalar(1)), Ordering::Equal);
}

TEST(Scalar, DomainErrors) {
  EXPECT_THROW((Scalar(1) / Scalar(0)).exact(), DivisionByZero);
  EXPECT_THROW(sqrt(Scalar(-2)).exact(), NegativeSqrt);
  EXPECT_THROW(sqrt(Scalar(-2)).eval(128), NegativeSqrt);
}

TEST(Compare, Examples) {
  for (auto kind : {BackendKind::Exact, BackendKind::Float}) {
    EXPECT_EQ(certified_compare(Scalar(1), Scalar(1), kind), Ordering::Equal);
    EXPECT_EQ(certified_compare(Scalar(3) / sqrt(Scalar(10)), Scalar(1), kind), Ordering::Less);
    EXPECT_EQ(certified_compare(unit(5), unit(6), kind), Ordering::Less);
  }
}

TEST(Compare, ExactRootsAndSquares) {
  // 3/sqrt(10) vs 1 by squaring: 9/10 < 1.
  EXPECT_EQ(oracle_sign({Rational(3, 10), 10}, {0, 1}, {1, 1}), -1);
  EXPECT_EQ(compare(Surd::radical(Rational(3, 10), 10), Surd(1)), -1);
}

TEST(Compare, FloatAgreesWithSquaringOracle) {
  std::mt19937_64 rng(20261016);
  int equal = 0;
  for (int n = 0; n < 10'000; ++n) {
    Term t1 = random_term(rng);
    Term t2 = random_term(rng);
    Term t3 = random_term(rng);
    if (n % 20 == 0) {
      // force a tie: t3 restates t1 and t2 vanishes
      t2 = {{0, 1}, Scalar(0)};
      t3 = {t1.rad, t1.expr * Scalar(1)};
    }
    const int want = oracle_sign(t1.rad, t2.rad, t3.rad);
    equal += want == 0;
    const Ordering got = certified_compare(t1.expr + t2.expr, t3.expr, BackendKind::Float);
    ASSERT_EQ(static_cast<int>(got), want) << "case " << n;
    ASSERT_EQ(static_cast<int>(certified_compare(t1.expr + t2.expr, t3.expr, BackendKind::Exact)), want);
  }
  EXPECT_GE(equal, 500);
}

TEST(Compare, PositionalValuesStrictlyDecrease) {
  for (long i = 0; i < 1000; ++i) {
    ASSERT_EQ(certified_compare(p_scalar(i), p_scalar(i + 1)), Ordering::Greater) << i;
    ASSERT_EQ(compare(positional_value(i), positional_value(i + 1)), 1) << i;
  }
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<long> d(0, 1000);
  for (int n = 0; n < 2000; ++n) {
    long i = d(rng);
    long j = d(rng);
    if (i == j) continue;
    if (i > j) std::swap(i, j);
    ASSERT_EQ(certified_compare(p_scalar(i), p_scalar(j)), Ordering::Greater) << i << " " << j;
  }
}

TEST(Compare, PositionalValueMatchesFormula) {
  EXPECT_NEAR(positional_value(0).to_double(), 1.0 - 3.0 / std::sqrt(10.0), 1e-15);
  EXPECT_EQ(compare(positional_value(0), Surd(1) - Surd::radical(Rational(3, 10), 10)), 0);
  for (long i : {1L, 10L, 999L}) {
    const Ball b = Ball::from_surd(positional_value(static_cast<std::uint64_t>(i)), 256);
    const Ball c = p_scalar(i).eval(256);
    EXPECT_EQ(ball_separation(b, c, 200), 0);
  }
}

// Differences between the scores the construction compares shrink like I^-5
// at worst: matched-vs-neighbour normalised integers and adjacent p_i.
TEST(Gap, ScaledMinimalGapStaysBounded) {
  const mpfr_prec_t prec = 512;
  auto gap_one = [&](long a, long b) {
    // 1 - u_a . u_b
    const Surd ab = Surd::radical(Rational(1, 1), static_cast<std::uint64_t>((a * a + 1) * (b * b + 1)));
    const Surd s = ab.scaled(Rational(a * b + 1, (a * a + 1) * (b * b + 1)));
    return Ball::from_surd(Surd(1) - s, prec).mid_ld();
  };
  double worst = HUGE_VAL;
  for (long I : {4L, 8L, 16L, 32L, 64L, 128L, 256L, 512L, 1000L}) {
    long double g = gap_one(I - 1, I);
    const long double dp =
        Ball::from_surd(positional_value(static_cast<std::uint64_t>(I - 1)) - positional_value(static_cast<std::uint64_t>(I)),
                        prec)
            .mid_ld();
    g = std::min(g, dp);
    const double scaled = static_cast<double>(g * std::pow(static_cast<long double>(I), 5));
    worst = std::min(worst, scaled);
    if (I == 1000) EXPECT_NEAR(scaled, 2.0, 0.02);  // adjacent p_i dominate, 2 I^-5
    EXPECT_GT(g, 0);
  }
  // frozen: the smallest scaled gap is 0.6267, at I = 4
  EXPECT_NEAR(worst, 0.6267, 1e-4);
}

TEST(Surd, SignOfSeveralRoots) {
  // sqrt2 + sqrt3 - sqrt10 < 0 (3.146 < 3.162)
  const Surd x = Surd::radical(1, 2) + Surd::radical(1, 3) - Surd::radical(1, 10);
  EXPECT_EQ(x.sign(), -1);
  const Surd y = Surd::radical(1, 2) + Surd::radical(1, 3) - Surd::radical(1, 5) - Surd(1);
  EXPECT_EQ(y.sign(), -1);  // 3.146 - 3.236
  EXPECT_EQ((Surd::radical(1, 8) - Surd::radical(2, 2)).sign(), 0);
}

TEST(Surd, LayerNormIsUnit) {
  const auto u = exact_layer_norm({Surd(3), Surd(4)});
  ASSERT_EQ(u.size(), 2u);
  EXPECT_EQ(u[0], Surd::fraction(3, 5));
  EXPECT_EQ(u[1], Surd::fraction(4, 5));
  const auto z = exact_layer_norm({Surd(0), Surd(0)});
  EXPECT_TRUE(z[0].is_zero() && z[1].is_zero());
  const auto v = exact_layer_norm({Surd(1), Surd(1)});
  EXPECT_EQ(compare(v[0] * v[0], Surd::fraction(1, 2)), 0);
}

TEST(Coef, SmallArithmetic) {
  const Coef a = Coef::frac(2, 6);
  EXPECT_TRUE(a.is_small());
  EXPECT_EQ(a.small_num(), 1);
  EXPECT_EQ(a.small_den(), 3);
  EXPECT_EQ(a + Coef::frac(2, 3), Coef(1));
  EXPECT_EQ(a * Coef(3), Coef(1));
  EXPECT_EQ(a.inverse(), Coef(3));
  EXPECT_EQ((-a).inverse(), Coef(-3));
  EXPECT_EQ(a.scaled(-6, 4), Coef::frac(-1, 2));
  EXPECT_EQ(cmp(Coef::frac(1, 3), Coef::frac(1, 2)), -1);
  bool exact = true;
  EXPECT_DOUBLE_EQ(Coef::frac(3, 8).get_d(&exact), 0.375);
  EXPECT_TRUE(exact);
  Coef::frac(1, 3).get_d(&exact);
  EXPECT_FALSE(exact);
}

TEST(Coef, OverflowSpillsAndDemotes) {
  const long big = 1L << 61;
  const Coef x(big);
  EXPECT_TRUE(x.is_small());
  const Coef y = x * Coef(4);  // 2^63 leaves the small form
  EXPECT_FALSE(y.is_small());
  EXPECT_EQ(y.q(), Rational(mpz_class(big)) * 4);
  const Coef z = y * Coef::frac(1, 4);  // and comes back
  EXPECT_TRUE(z.is_small());
  EXPECT_EQ(z, x);
  EXPECT_EQ(z.hash(), x.hash());
  const Coef w = Coef(Rational(mpz_class(big) * 8, mpz_class(8)));
  EXPECT_TRUE(w.is_small());
  EXPECT_EQ(w, x);
  // a sum whose cross products exceed 64 bits
  const Coef u = Coef::frac(1, (1UL << 61) - 1) + Coef::frac(1, (1UL << 61) + 1);
  EXPECT_FALSE(u.is_small());
  EXPECT_EQ(u.q(), Rational(1, (1UL << 61) - 1) + Rational(1, (1UL << 61) + 1));
  EXPECT_EQ(u - Coef::frac(1, (1UL << 61) + 1), Coef::frac(1, (1UL << 61) - 1));
  EXPECT_TRUE((u - Coef::frac(1, (1UL << 61) + 1)).is_small());
}

TEST(Coef, AgreesWithMpq) {
  std::mt19937_64 rng(3);
  for (int n = 0; n < 20'000; ++n) {
    const int shift = static_cast<int>(rng() % 62);
    auto draw = [&] {
      const long v = static_cast<long>(rng() >> (2 + shift)) - (1L << (61 - shift));
      const unsigned long d = (rng() >> (2 + shift)) | 1UL;
      return std::pair<long, unsigned long>{v, d};
    };
    const auto [an, ad] = draw();
    const auto [bn, bd] = draw();
    const Coef a = Coef::frac(an, ad);
    const Coef b = Coef::frac(bn, bd);
    Rational qa(an, ad);
    Rational qb(bn, bd);
    qa.canonicalize();
    qb.canonicalize();
    ASSERT_EQ((a + b).q(), qa + qb);
    ASSERT_EQ((a - b).q(), qa - qb);
    ASSERT_EQ((a * b).q(), qa * qb);
    ASSERT_EQ(cmp(a, b), cmp(qa, qb) > 0 ? 1 : (cmp(qa, qb) < 0 ? -1 : 0));
    ASSERT_EQ(a + b == Coef(qa + qb), true);
  }
}

TEST(Precision, ConfigValidation) {
  PrecisionConfig c;
  c.significant_bits = 4;
  EXPECT_THROW(c.validate(), NumericError);
  EXPECT_THROW(parse_backend("double"), NumericError);
  PrecisionConfig d;
  EXPECT_EQ(d.significant_bits, 64);
  EXPECT_EQ(d.max_escalations, 8);
  EXPECT_EQ(d.escalated(2).guard_bits, d.guard_bits * 4);
}

TEST(Precision, FloatBackendRefusesUndecidableComparison) {
  // Two values 2^-80 apart cannot be told apart at 16 significant bits.
  FloatBackend be({16, 0, 0});
  const auto a = be.constant(Rational(1));
  mpz_class den = 1;
  den <<= 80;
  const auto b = be.constant(Rational(1) + Rational(mpz_class(1), den));
  EXPECT_THROW(be.compare(a, b), PrecisionExhausted);
  EXPECT_EQ(be.compare(a, a), 0);
  FloatBackend wide({128, 0, 0});
  EXPECT_EQ(wide.compare(wide.constant(Rational(1)), wide.constant(Rational(1) + Rational(mpz_class(1), den))), -1);
}
