#pragma once

// Standalone scalar expressions with certified comparison. A Scalar is an
// immutable expression DAG over rationals; it can be evaluated exactly or as a
// ball at any precision, so the adaptive backend can re-evaluate a whole
// expression after each escalation.

#include <memory>
#include <string>
#include <unordered_map>
#include <utility>

#include "ptvm/numerics/ball.hpp"
#include "ptvm/numerics/errors.hpp"
#include "ptvm/numerics/surd.hpp"

namespace ptvm::num {

enum class Ordering { Less = -1, Equal = 0, Greater = 1 };

inline const char* to_string(Ordering o) {
  switch (o) {
    case Ordering::Less: return "<";
    case Ordering::Equal: return "=";
    case Ordering::Greater: return ">";
  }
  return "?";
}

enum class BackendKind { Exact, Float };

inline BackendKind parse_backend(const std::string& s) {
  if (s == "exact") return BackendKind::Exact;
  if (s == "float") return BackendKind::Float;
  throw NumericError("unknown backend '" + s + "' (expected exact or float)");
}

class Scalar {
 public:
  enum class Op { Const, Add, Sub, Mul, Div, Sqrt, Neg };

  Scalar() : Scalar(Rational(0)) {}
  Scalar(long v) : Scalar(Rational(v)) {}  // NOLINT(google-explicit-constructor)
  Scalar(const Rational& q)                  // NOLINT(google-explicit-constructor)
      : node_(std::make_shared<Node>(Node{Op::Const, q, nullptr, nullptr})) {}

  static Scalar fraction(long num, long den) {
    if (den == 0) throw DivisionByZero();
    Rational q(num, den);
    q.canonicalize();
    return Scalar(q);
  }

  friend Scalar operator+(const Scalar& a, const Scalar& b) { return make(Op::Add, a, b); }
  friend Scalar operator-(const Scalar& a, const Scalar& b) { return make(Op::Sub, a, b); }
  friend Scalar operator*(const Scalar& a, const Scalar& b) { return make(Op::Mul, a, b); }
  friend Scalar operator/(const Scalar& a, const Scalar& b) { return make(Op::Div, a, b); }
  Scalar operator-() const { return make(Op::Neg, *this, Scalar()); }
  friend Scalar sqrt(const Scalar& a) { return make(Op::Sqrt, a, Scalar()); }

  // Exact value. Throws DivisionByZero / NegativeSqrt on domain errors and
  // Unrepresentable when the value leaves the exact field.
  [[nodiscard]] Surd exact() const {
    std::unordered_map<const Node*, Surd> memo;
    return exact_rec(node_.get(), memo);
  }

  // Ball enclosure at `prec` working bits. Throws PrecisionExhausted when a
  // division or square root cannot be resolved at this precision.
  [[nodiscard]] Ball eval(mpfr_prec_t prec) const {
    std::unordered_map<const Node*, Ball> memo;
    return eval_rec(node_.get(), prec, memo);
  }

  [[nodiscard]] double to_double() const { return static_cast<double>(eval(128).mid_ld()); }

 private:
  struct Node {
    Op op;
    Rational value;
    std::shared_ptr<const Node> a;
    std::shared_ptr<const Node> b;
  };
  std::shared_ptr<const Node> node_;

  static Scalar make(Op op, const Scalar& a, const Scalar& b) {
    Scalar s;
    s.node_ = std::make_shared<Node>(Node{op, Rational(0), a.node_, b.node_});
    return s;
  }

  static Surd exact_rec(const Node* n, std::unordered_map<const Node*, Surd>& memo) {
    if (n->op == Op::Const) return Surd(n->value);
    if (auto it = memo.find(n); it != memo.end()) return it->second;
    Surd out;
    switch (n->op) {
      case Op::Add: out = exact_rec(n->a.get(), memo) + exact_rec(n->b.get(), memo); break;
      case Op::Sub: out = exact_rec(n->a.get(), memo) - exact_rec(n->b.get(), memo); break;
      case Op::Mul: out = exact_rec(n->a.get(), memo) * exact_rec(n->b.get(), memo); break;
      case Op::Div: out = exact_rec(n->a.get(), memo) / exact_rec(n->b.get(), memo); break;
      case Op::Neg: out = -exact_rec(n->a.get(), memo); break;
      case Op::Sqrt: {
        Surd x = exact_rec(n->a.get(), memo);
        if (x.sign() < 0) throw NegativeSqrt();
        out = Surd::sqrt_of(x);
        break;
      }
      case Op::Const: break;
    }
    memo.emplace(n, out);
    return out;
  }

  static Ball eval_rec(const Node* n, mpfr_prec_t prec,
                       std::unordered_map<const Node*, Ball>& memo) {
    if (n->op == Op::Const) return Ball::exact(n->value, prec);
    if (auto it = memo.find(n); it != memo.end()) return it->second;
    Ball out;
    switch (n->op) {
      case Op::Add: out = add(eval_rec(n->a.get(), prec, memo), eval_rec(n->b.get(), prec, memo), prec); break;
      case Op::Sub: out = add(eval_rec(n->a.get(), prec, memo), eval_rec(n->b.get(), prec, memo), prec, true); break;
      case Op::Mul: out = mul(eval_rec(n->a.get(), prec, memo), eval_rec(n->b.get(), prec, memo), prec); break;
      case Op::Neg: out = eval_rec(n->a.get(), prec, memo).neg(); break;
      case Op::Div: {
        const Ball d = eval_rec(n->b.get(), prec, memo);
        if (d.rad() == 0 && mpfr_zero_p(d.mid().get())) throw DivisionByZero();
        out = div(eval_rec(n->a.get(), prec, memo), d, prec);
        break;
      }
      case Op::Sqrt: {
        const Ball x = eval_rec(n->a.get(), prec, memo);
        if (x.rad() == 0 && mpfr_zero_p(x.mid().get())) {
          out = Ball(Mpfr(prec), 0.0L);
        } else if (x.mid_ld() + x.rad() < 0) {
          throw NegativeSqrt();
        } else {
          out = sqrt(x, prec);
        }
        break;
      }
      case Op::Const: break;
    }
    memo.emplace(n, out);
    return out;
  }
};

inline Ordering ordering_from(int s) {
  return s < 0 ? Ordering::Less : (s > 0 ? Ordering::Greater : Ordering::Equal);
}

// Certified comparison. The exact backend decides by exact sign. The float
// backend evaluates both sides as balls, doubling the guard bits up to
// max_escalations times; if the balls never separate it asks the exact field
// whether the values coincide and otherwise raises PrecisionExhausted.
inline Ordering certified_compare(const Scalar& a, const Scalar& b,
                                  BackendKind kind = BackendKind::Float,
                                  const PrecisionConfig& cfg = PrecisionConfig::from_env()) {
  cfg.validate();
  if (kind == BackendKind::Exact) return ordering_from((a - b).exact().sign());
  for (int k = 0; k <= cfg.max_escalations; ++k) {
    const PrecisionConfig c = k == 0 ? cfg : cfg.escalated(k);
    try {
      const Ball x = a.eval(c.working_bits());
      const Ball y = b.eval(c.working_bits());
      const int s = ball_separation(x, y, c.comparison_bits());
      if (s != 0) return ordering_from(s);
    } catch (const PrecisionExhausted&) {
      // a division or root was unresolved at this precision; escalate
    }
  }
  Surd d;
  try {
    d = (a - b).exact();
  } catch (const Unrepresentable&) {
    throw PrecisionExhausted("no separation after " + std::to_string(cfg.max_escalations) +
                             " escalations and no exact certificate");
  }
  if (d.is_zero()) return Ordering::Equal;
  throw PrecisionExhausted("no separation after " + std::to_string(cfg.max_escalations) +
                           " escalations");
}

}  // namespace ptvm::num
