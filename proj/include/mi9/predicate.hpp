#pragma once

#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "mi9/errors.hpp"
#include "mi9/event.hpp"

namespace mi9 {

enum class CmpOp { Eq, Ne, Prefix, Ge, Le };

inline std::string_view cmp_op_name(CmpOp op) {
  switch (op) {
    case CmpOp::Eq: return "eq";
    case CmpOp::Ne: return "ne";
    case CmpOp::Prefix: return "prefix";
    case CmpOp::Ge: return "ge";
    case CmpOp::Le: return "le";
  }
  return "eq";
}

inline std::optional<CmpOp> cmp_op_from_name(std::string_view s) {
  if (s == "eq") return CmpOp::Eq;
  if (s == "ne") return CmpOp::Ne;
  if (s == "prefix") return CmpOp::Prefix;
  if (s == "ge") return CmpOp::Ge;
  if (s == "le") return CmpOp::Le;
  return std::nullopt;
}

// One atomic comparison against an event. Fields: "verb", "risk_tier",
// "category", or "payload.<key>" ("role" is shorthand for "payload.role").
// A missing payload key never satisfies an atom, including Ne.
struct Atom {
  enum class Field { Verb, RiskTier, Category, Payload };

  Field field = Field::Verb;
  std::string payload_key;
  CmpOp op = CmpOp::Eq;
  PayloadValue value;

  bool eval(const Event& e) const {
    switch (field) {
      case Field::Verb:
        return eval_string(e.verb);
      case Field::Category:
        return eval_string(std::string(category_name(e.category)));
      case Field::RiskTier:
        return eval_number(static_cast<double>(e.risk_tier));
      case Field::Payload: {
        const PayloadValue* v = e.find(payload_key);
        if (!v) return false;
        if (op == CmpOp::Ge || op == CmpOp::Le) {
          auto n = e.payload_number(payload_key);
          return n ? eval_number(*n) : false;
        }
        if (const auto* s = std::get_if<std::string>(v)) return eval_string(*s);
        if (const auto* b = std::get_if<bool>(v)) {
          const auto* want = std::get_if<bool>(&value);
          if (!want) return false;
          return op == CmpOp::Eq ? *b == *want : (op == CmpOp::Ne && *b != *want);
        }
        auto n = e.payload_number(payload_key);
        return n ? eval_number(*n) : false;
      }
    }
    return false;
  }

  std::string field_name() const {
    switch (field) {
      case Field::Verb: return "verb";
      case Field::RiskTier: return "risk_tier";
      case Field::Category: return "category";
      case Field::Payload: return "payload." + payload_key;
    }
    return "verb";
  }

 private:
  bool eval_string(const std::string& actual) const {
    const auto* want = std::get_if<std::string>(&value);
    if (!want) return false;
    switch (op) {
      case CmpOp::Eq: return actual == *want;
      case CmpOp::Ne: return actual != *want;
      case CmpOp::Prefix:
        return actual.size() >= want->size() && actual.compare(0, want->size(), *want) == 0;
      case CmpOp::Ge: return actual >= *want;
      case CmpOp::Le: return actual <= *want;
    }
    return false;
  }

  bool eval_number(double actual) const {
    double want = 0;
    if (const auto* i = std::get_if<std::int64_t>(&value)) {
      want = static_cast<double>(*i);
    } else if (const auto* d = std::get_if<double>(&value)) {
      want = *d;
    } else {
      return false;
    }
    switch (op) {
      case CmpOp::Eq: return actual == want;
      case CmpOp::Ne: return actual != want;
      case CmpOp::Ge: return actual >= want;
      case CmpOp::Le: return actual <= want;
      case CmpOp::Prefix: return false;
    }
    return false;
  }
};

inline Atom make_atom(Atom::Field field, CmpOp op, PayloadValue value, std::string payload_key = "") {
  Atom a;
  a.field = field;
  a.op = op;
  a.value = std::move(value);
  a.payload_key = std::move(payload_key);
  return a;
}

inline Atom verb_eq(std::string verb) {
  return make_atom(Atom::Field::Verb, CmpOp::Eq, std::move(verb));
}

inline Atom payload_eq(std::string key, PayloadValue value) {
  return make_atom(Atom::Field::Payload, CmpOp::Eq, std::move(value), std::move(key));
}

// Conjunction of atoms; side-effect free, evaluable on any event.
struct Predicate {
  std::vector<Atom> atoms;

  void validate() const {
    if (atoms.empty()) throw Error(Errc::EmptyPredicate, "predicate needs at least one atom");
  }

  bool eval(const Event& e) const {
    for (const auto& a : atoms) {
      if (!a.eval(e)) return false;
    }
    return true;
  }
};

}  // namespace mi9
