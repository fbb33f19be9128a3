#include "abc/diagrams.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

namespace abc {
namespace {

// ---------------------------------------------------------------------------
// Rational
// ---------------------------------------------------------------------------

long long igcd(long long a, long long b) {
  a = std::llabs(a);
  b = std::llabs(b);
  while (b != 0) {
    long long t = a % b;
    a = b;
    b = t;
  }
  return a;
}

// ---------------------------------------------------------------------------
// Momentum algebra.  A Momentum is a sorted, zero-free list of
// (label, integer coefficient); label -1 is the external pin.
// ---------------------------------------------------------------------------

Momentum mom_normalize(Momentum m) {
  std::sort(m.begin(), m.end());
  Momentum out;
  for (const auto& e : m) {
    if (!out.empty() && out.back().first == e.first) {
      out.back().second += e.second;
      if (out.back().second == 0) out.pop_back();
    } else if (e.second != 0) {
      out.push_back(e);
    }
  }
  return out;
}

Momentum mom_combine(const Momentum& a, const Momentum& b, int sb) {
  Momentum m = a;
  for (const auto& e : b) m.emplace_back(e.first, e.second * sb);
  return mom_normalize(m);
}

Momentum mom_scale(const Momentum& a, int c) {
  if (c == 0) return {};
  Momentum m = a;
  for (auto& e : m) e.second *= c;
  return m;
}

int mom_coeff(const Momentum& m, int label) {
  for (const auto& e : m)
    if (e.first == label) return e.second;
  return 0;
}

// m with `label` replaced by `repl`.
Momentum mom_subst(const Momentum& m, int label, const Momentum& repl) {
  int c = mom_coeff(m, label);
  if (c == 0) return m;
  Momentum base;
  for (const auto& e : m)
    if (e.first != label) base.push_back(e);
  return mom_combine(base, mom_scale(repl, c), 1);
}

Momentum mom_apply(const Momentum& m, const std::map<int, int>& rename) {
  Momentum out = m;
  for (auto& e : out) {
    auto it = rename.find(e.first);
    if (it != rename.end()) e.first = it->second;
  }
  return mom_normalize(out);
}

// Sign convention for arguments of the (even) dispersion: flip the whole
// combination so its leading coefficient is positive.
Momentum mom_even_norm(Momentum m) {
  if (!m.empty() && m.front().second < 0) m = mom_scale(m, -1);
  return m;
}

std::string mom_str(const Momentum& m) {
  if (m.empty()) return "0";
  std::string s;
  bool first = true;
  for (const auto& e : m) {
    int c = e.second;
    if (c < 0) {
      s += '-';
      c = -c;
    } else if (!first) {
      s += '+';
    }
    if (c != 1) s += std::to_string(c) + "*";
    s += (e.first == -1) ? "p" : "k" + std::to_string(e.first);
    first = false;
  }
  return s;
}

// ---------------------------------------------------------------------------
// Energy sums
// ---------------------------------------------------------------------------

bool esum_entry_less(const EnergyEntry& a, const EnergyEntry& b) {
  if (a.arg.size() != b.arg.size()) return a.arg.size() < b.arg.size();
  return mom_str(a.arg) < mom_str(b.arg);
}

EnergySum esum_normalize(EnergySum s) {
  for (auto& e : s) e.arg = mom_even_norm(mom_normalize(e.arg));
  std::sort(s.begin(), s.end(), esum_entry_less);
  EnergySum out;
  for (const auto& e : s) {
    if (!out.empty() && out.back().arg == e.arg) {
      out.back().coeff += e.coeff;
      if (out.back().coeff == 0) out.pop_back();
    } else if (e.coeff != 0) {
      out.push_back(e);
    }
  }
  return out;
}

EnergySum esum_subst(const EnergySum& s, int label, const Momentum& repl) {
  EnergySum out = s;
  for (auto& e : out) e.arg = mom_subst(e.arg, label, repl);
  return esum_normalize(out);
}

EnergySum esum_apply(const EnergySum& s, const std::map<int, int>& rename) {
  EnergySum out = s;
  for (auto& e : out) e.arg = mom_apply(e.arg, rename);
  return esum_normalize(out);
}

std::string esum_str(const EnergySum& s) {
  std::string out;
  bool first = true;
  for (const auto& e : s) {
    int c = e.coeff;
    if (c < 0) {
      out += '-';
      c = -c;
    } else if (!first) {
      out += '+';
    }
    if (c != 1) out += std::to_string(c) + "*";
    out += "w(" + mom_str(e.arg) + ")";
    first = false;
  }
  return out.empty() ? "0" : out;
}

// ---------------------------------------------------------------------------
// Kernel factors
// ---------------------------------------------------------------------------

void factor_normalize(KernelFactor& f) {
  for (auto& a : f.left_args) a = mom_normalize(a);
  for (auto& a : f.right_args) a = mom_normalize(a);
  auto less = [](const Momentum& a, const Momentum& b) { return mom_str(a) < mom_str(b); };
  std::sort(f.left_args.begin(), f.left_args.end(), less);
  std::sort(f.right_args.begin(), f.right_args.end(), less);
}

KernelFactor factor_subst(const KernelFactor& f, int label, const Momentum& repl) {
  KernelFactor out = f;
  for (auto& a : out.left_args) a = mom_subst(a, label, repl);
  for (auto& a : out.right_args) a = mom_subst(a, label, repl);
  return out;
}

KernelFactor factor_apply(const KernelFactor& f, const std::map<int, int>& rename) {
  KernelFactor out = f;
  for (auto& a : out.left_args) a = mom_apply(a, rename);
  for (auto& a : out.right_args) a = mom_apply(a, rename);
  return out;
}

std::string factor_str(const KernelFactor& f) {
  std::string s = f.conjugated ? "v~(" : "v(";
  for (std::size_t i = 0; i < f.left_args.size(); ++i) {
    if (i) s += ',';
    s += mom_str(f.left_args[i]);
  }
  if (!f.right_args.empty()) {
    s += '|';
    for (std::size_t i = 0; i < f.right_args.size(); ++i) {
      if (i) s += ',';
      s += mom_str(f.right_args[i]);
    }
  }
  s += ')';
  return s;
}

// ---------------------------------------------------------------------------
// Term helpers
// ---------------------------------------------------------------------------

void term_visit_momenta(const WickTerm& t, const std::function<void(const Momentum&)>& cb) {
  for (const auto& m : t.creators) cb(m);
  for (const auto& m : t.annihilators) cb(m);
  for (const auto& f : t.kernel) {
    for (const auto& m : f.left_args) cb(m);
    for (const auto& m : f.right_args) cb(m);
  }
  for (const auto& d : t.denominators)
    for (const auto& e : d) cb(e.arg);
}

std::vector<int> term_labels(const WickTerm& t) {
  std::set<int> labs;
  term_visit_momenta(t, [&](const Momentum& m) {
    for (const auto& e : m)
      if (e.first >= 0) labs.insert(e.first);
  });
  return {labs.begin(), labs.end()};
}

int term_max_label(const WickTerm& t) {
  int mx = -1;
  term_visit_momenta(t, [&](const Momentum& m) {
    for (const auto& e : m) mx = std::max(mx, e.first);
  });
  return mx;
}

WickTerm term_offset_labels(const WickTerm& t, int delta) {
  std::map<int, int> rename;
  for (int l : term_labels(t)) rename[l] = l + delta;
  WickTerm out = t;
  for (auto& m : out.creators) m = mom_apply(m, rename);
  for (auto& m : out.annihilators) m = mom_apply(m, rename);
  for (auto& f : out.kernel) f = factor_apply(f, rename);
  for (auto& d : out.denominators) d = esum_apply(d, rename);
  return out;
}

WickTerm term_apply(const WickTerm& t, const std::map<int, int>& rename) {
  WickTerm out = t;
  for (auto& m : out.creators) m = mom_apply(m, rename);
  for (auto& m : out.annihilators) m = mom_apply(m, rename);
  for (auto& f : out.kernel) f = factor_apply(f, rename);
  for (auto& d : out.denominators) d = esum_apply(d, rename);
  return out;
}

// Substitutes label -> repl in every structure of the term plus an optional
// side sum (used for the conjugation phase while contracting).
void term_subst(WickTerm& t, int label, const Momentum& repl, EnergySum* side) {
  for (auto& m : t.creators) m = mom_subst(m, label, repl);
  for (auto& m : t.annihilators) m = mom_subst(m, label, repl);
  for (auto& f : t.kernel) f = factor_subst(f, label, repl);
  for (auto& d : t.denominators) {
    d = esum_subst(d, label, repl);
    if (d.empty())
      throw std::logic_error("wick contraction cancelled an energy denominator");
  }
  if (side) *side = esum_subst(*side, label, repl);
}

void sort_term_lists(WickTerm& t) {
  auto less = [](const Momentum& a, const Momentum& b) { return mom_str(a) < mom_str(b); };
  for (auto& m : t.creators) m = mom_normalize(m);
  for (auto& m : t.annihilators) m = mom_normalize(m);
  std::sort(t.creators.begin(), t.creators.end(), less);
  std::sort(t.annihilators.begin(), t.annihilators.end(), less);
  for (auto& f : t.kernel) factor_normalize(f);
  std::sort(t.kernel.begin(), t.kernel.end(),
            [](const KernelFactor& a, const KernelFactor& b) { return factor_str(a) < factor_str(b); });
  for (auto& d : t.denominators) d = esum_normalize(d);
  std::sort(t.denominators.begin(), t.denominators.end(),
            [](const EnergySum& a, const EnergySum& b) { return esum_str(a) < esum_str(b); });
}

std::string term_structure_str(const WickTerm& t) {
  std::string cr, an, ker, den;
  for (const auto& m : t.creators) {
    if (!cr.empty()) cr += ' ';
    cr += "a*(" + mom_str(m) + ")";
  }
  for (const auto& m : t.annihilators) {
    if (!an.empty()) an += ' ';
    an += "a(" + mom_str(m) + ")";
  }
  for (const auto& f : t.kernel) {
    if (!ker.empty()) ker += ' ';
    ker += factor_str(f);
  }
  for (const auto& d : t.denominators) den += "[" + esum_str(d) + "]";
  if (cr.empty()) cr = "-";
  if (an.empty()) an = "-";
  if (ker.empty()) ker = "-";
  if (den.empty()) den = "-";
  return cr + " | " + an + " | " + ker + " | " + den;
}

// Union-find over kernel factors through shared labels; returns the number of
// factor components and fills comp_of_label.
int term_components(const WickTerm& t, std::map<int, int>* comp_of_label) {
  const std::size_t nf = t.kernel.size();
  std::vector<int> parent(nf);
  std::iota(parent.begin(), parent.end(), 0);
  std::function<int(int)> find = [&](int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  auto unite = [&](int a, int b) { parent[find(a)] = find(b); };

  std::map<int, int> first_factor;
  for (std::size_t i = 0; i < nf; ++i) {
    std::set<int> labs;
    auto grab = [&](const Momentum& m) {
      for (const auto& e : m)
        if (e.first >= 0) labs.insert(e.first);
    };
    for (const auto& m : t.kernel[i].left_args) grab(m);
    for (const auto& m : t.kernel[i].right_args) grab(m);
    for (int l : labs) {
      auto it = first_factor.find(l);
      if (it == first_factor.end())
        first_factor[l] = static_cast<int>(i);
      else
        unite(static_cast<int>(i), it->second);
    }
  }
  std::map<int, int> root_id;
  for (std::size_t i = 0; i < nf; ++i) {
    int r = find(static_cast<int>(i));
    if (!root_id.count(r)) root_id[r] = static_cast<int>(root_id.size());
  }
  if (comp_of_label) {
    comp_of_label->clear();
    for (const auto& [lab, fi] : first_factor) (*comp_of_label)[lab] = root_id[find(fi)];
  }
  return static_cast<int>(root_id.size());
}

// ---------------------------------------------------------------------------
// Canonical labeling: per connected component, the label permutation with the
// lexicographically minimal structure string; components ordered by their
// canonical keys.  Terms whose legs or denominators straddle components (not
// produced by the operations here) fall back to a global minimization.
// ---------------------------------------------------------------------------

std::string key_with_map(const WickTerm& t, const std::map<int, int>& rename) {
  WickTerm c = term_apply(t, rename);
  sort_term_lists(c);
  return term_structure_str(c);
}

std::string canonical_fallback(WickTerm& t, const std::vector<int>& labels) {
  if (labels.size() > 9)
    throw std::logic_error("canonical labeling: too many labels for fallback search");
  std::vector<int> target(labels.size());
  std::iota(target.begin(), target.end(), 0);
  std::string best;
  std::map<int, int> best_map;
  do {
    std::map<int, int> rename;
    for (std::size_t i = 0; i < labels.size(); ++i) rename[labels[i]] = target[i];
    std::string key = key_with_map(t, rename);
    if (best.empty() || key < best) {
      best = key;
      best_map = rename;
    }
  } while (std::next_permutation(target.begin(), target.end()));
  t = term_apply(t, best_map);
  sort_term_lists(t);
  return best;
}

struct ComponentView {
  std::vector<int> labels;
  WickTerm slice;  // factors, denominators, and legs belonging to the component
};

std::string canonicalize_term(WickTerm& t) {
  for (auto& m : t.creators) m = mom_normalize(m);
  for (auto& m : t.annihilators) m = mom_normalize(m);
  for (auto& f : t.kernel) factor_normalize(f);
  for (auto& d : t.denominators) d = esum_normalize(d);

  std::map<int, int> comp_of_label;
  const int ncomp = term_components(t, &comp_of_label);
  t.connected = (ncomp == 1) && !t.kernel.empty();

  const std::vector<int> labels = term_labels(t);
  if (labels.empty()) {
    sort_term_lists(t);
    return term_structure_str(t);
  }

  bool external = false;
  term_visit_momenta(t, [&](const Momentum& m) {
    for (const auto& e : m)
      if (e.first < 0) external = true;
  });

  // Component of a momentum list; -2 when empty or straddling.
  auto comp_of = [&](const Momentum& m) {
    int comp = -2;
    for (const auto& e : m) {
      if (e.first < 0) return -2;
      auto it = comp_of_label.find(e.first);
      if (it == comp_of_label.end()) return -2;
      if (comp == -2)
        comp = it->second;
      else if (comp != it->second)
        return -2;
    }
    return comp;
  };

  bool decomposable = !external;
  std::vector<ComponentView> comps(ncomp);
  if (decomposable) {
    for (const auto& [lab, c] : comp_of_label) comps[c].labels.push_back(lab);
    for (const auto& f : t.kernel) {
      Momentum probe;
      for (const auto& a : f.left_args)
        for (const auto& e : a) probe.push_back(e);
      for (const auto& a : f.right_args)
        for (const auto& e : a) probe.push_back(e);
      int c = comp_of(mom_normalize(probe));
      if (c < 0) {
        decomposable = false;
        break;
      }
      comps[c].slice.kernel.push_back(f);
    }
  }
  if (decomposable) {
    for (const auto& d : t.denominators) {
      Momentum probe;
      for (const auto& e : d)
        for (const auto& en : e.arg) probe.push_back(en);
      int c = comp_of(mom_normalize(probe));
      if (c < 0) {
        decomposable = false;
        break;
      }
      comps[c].slice.denominators.push_back(d);
    }
  }
  if (decomposable) {
    for (const auto& m : t.creators) {
      int c = comp_of(m);
      if (c < 0) {
        decomposable = false;
        break;
      }
      comps[c].slice.creators.push_back(m);
    }
  }
  if (decomposable) {
    for (const auto& m : t.annihilators) {
      int c = comp_of(m);
      if (c < 0) {
        decomposable = false;
        break;
      }
      comps[c].slice.annihilators.push_back(m);
    }
  }
  if (!decomposable) return canonical_fallback(t, labels);

  struct Solved {
    std::string key;
    std::map<int, int> rel;
    const std::vector<int>* labels;
  };
  std::vector<Solved> solved(ncomp);
  for (int c = 0; c < ncomp; ++c) {
    auto& cv = comps[c];
    std::sort(cv.labels.begin(), cv.labels.end());
    if (cv.labels.size() > 9)
      throw std::logic_error("canonical labeling: component too large");
    std::vector<int> target(cv.labels.size());
    std::iota(target.begin(), target.end(), 0);
    std::string best;
    std::map<int, int> best_rel;
    do {
      std::map<int, int> rel;
      for (std::size_t i = 0; i < cv.labels.size(); ++i) rel[cv.labels[i]] = target[i];
      std::string key = key_with_map(cv.slice, rel);
      if (best.empty() || key < best) {
        best = key;
        best_rel = rel;
      }
    } while (std::next_permutation(target.begin(), target.end()));
    solved[c] = {best, best_rel, &cv.labels};
  }
  std::stable_sort(solved.begin(), solved.end(),
                   [](const Solved& a, const Solved& b) { return a.key < b.key; });

  std::map<int, int> global;
  int offset = 0;
  for (const auto& s : solved) {
    for (const auto& [lab, rel] : s.rel) global[lab] = offset + rel;
    offset += static_cast<int>(s.labels->size());
  }
  t = term_apply(t, global);
  sort_term_lists(t);
  return term_structure_str(t);
}

DiagramExpression make_empty(int order) {
  DiagramExpression e;
  e.order = order;
  return e;
}

DiagramExpression make_identity() {
  DiagramExpression e;
  e.order = 0;
  WickTerm one;
  one.sign_coeff = Rational::of(1);
  one.connected = false;
  e.terms.push_back(one);
  return e;
}

bool is_identity_term(const WickTerm& t) {
  return t.kernel.empty() && t.creators.empty() && t.annihilators.empty() &&
         t.denominators.empty();
}

// Signed free-leg energy sum: +w over creators, -w over annihilators.
EnergySum free_energy_sum(const WickTerm& t) {
  EnergySum s;
  for (const auto& m : t.creators) s.push_back({m, 1});
  for (const auto& m : t.annihilators) s.push_back({m, -1});
  return esum_normalize(s);
}

// ---------------------------------------------------------------------------
// Contraction engine
// ---------------------------------------------------------------------------

struct MergeOutcome {
  WickTerm term;
  EnergySum left_phase;  // the left factor's free-leg energies, tracked
                         // through the label eliminations
};

MergeOutcome merge_terms(const WickTerm& a, const WickTerm& b,
                         const std::vector<std::pair<int, int>>& matching) {
  const int off = term_max_label(a) + 1;
  const WickTerm bb = term_offset_labels(b, off);

  WickTerm t;
  t.creators = a.creators;
  t.creators.insert(t.creators.end(), bb.creators.begin(), bb.creators.end());
  t.annihilators = a.annihilators;
  t.annihilators.insert(t.annihilators.end(), bb.annihilators.begin(), bb.annihilators.end());
  t.kernel = a.kernel;
  t.kernel.insert(t.kernel.end(), bb.kernel.begin(), bb.kernel.end());
  t.denominators = a.denominators;
  t.denominators.insert(t.denominators.end(), bb.denominators.begin(), bb.denominators.end());
  t.sign_coeff = a.sign_coeff * b.sign_coeff;

  EnergySum phase = free_energy_sum(a);

  std::vector<char> rm_cr(t.creators.size(), 0), rm_an(t.annihilators.size(), 0);
  for (const auto& [ai, bj] : matching) {
    const std::size_t ci = a.creators.size() + static_cast<std::size_t>(bj);
    const Momentum diff = mom_combine(t.annihilators[ai], t.creators[ci], -1);
    if (diff.empty())
      throw std::logic_error("wick contraction closes a zero-momentum loop");
    int lab = -1, coeff = 0;
    for (const auto& e : diff) {
      if (e.first >= 0 && (e.second == 1 || e.second == -1)) {
        lab = e.first;
        coeff = e.second;
      }
    }
    if (lab < 0)
      throw std::logic_error("wick contraction without a unit-coefficient label");
    Momentum rest;
    for (const auto& e : diff)
      if (e.first != lab) rest.push_back(e);
    const Momentum repl = mom_scale(mom_normalize(rest), coeff == 1 ? -1 : 1);
    term_subst(t, lab, repl, &phase);
    rm_an[ai] = 1;
    rm_cr[ci] = 1;
  }

  WickTerm out;
  out.sign_coeff = t.sign_coeff;
  out.kernel = std::move(t.kernel);
  out.denominators = std::move(t.denominators);
  for (std::size_t i = 0; i < t.creators.size(); ++i)
    if (!rm_cr[i]) out.creators.push_back(t.creators[i]);
  for (std::size_t i = 0; i < t.annihilators.size(); ++i)
    if (!rm_an[i]) out.annihilators.push_back(t.annihilators[i]);
  return {std::move(out), esum_normalize(phase)};
}

// All injective partial matchings of a's annihilator indices into b's creator
// indices, in a fixed enumeration order.
void enumerate_matchings(std::size_t n_an, std::size_t n_cr,
                         std::vector<std::vector<std::pair<int, int>>>& out) {
  std::vector<std::pair<int, int>> cur;
  std::vector<char> used(n_cr, 0);
  std::function<void(std::size_t)> rec = [&](std::size_t ai) {
    if (ai == n_an) {
      out.push_back(cur);
      return;
    }
    rec(ai + 1);
    for (std::size_t bj = 0; bj < n_cr; ++bj) {
      if (used[bj]) continue;
      used[bj] = 1;
      cur.emplace_back(static_cast<int>(ai), static_cast<int>(bj));
      rec(ai + 1);
      cur.pop_back();
      used[bj] = 0;
    }
  };
  rec(0);
}

}  // namespace

// ---------------------------------------------------------------------------
// Rational
// ---------------------------------------------------------------------------

Rational Rational::of(long long n, long long d) {
  if (d == 0) throw std::invalid_argument("Rational: zero denominator");
  if (d < 0) {
    n = -n;
    d = -d;
  }
  const long long g = n == 0 ? 1 : igcd(n, d);
  return Rational{n / g, d / g};
}

Rational Rational::operator*(const Rational& o) const {
  return Rational::of(num * o.num, den * o.den);
}

Rational Rational::operator+(const Rational& o) const {
  return Rational::of(num * o.den + o.num * den, den * o.den);
}

Rational Rational::operator-() const { return Rational{-num, den}; }

std::string Rational::str() const {
  if (den == 1) return std::to_string(num);
  return std::to_string(num) + "/" + std::to_string(den);
}

// ---------------------------------------------------------------------------
// Expression basics
// ---------------------------------------------------------------------------

std::string DiagramExpression::to_text() const {
  if (terms.empty()) return "0\n";
  std::string out;
  for (const auto& t : terms) out += t.sign_coeff.str() + " | " + term_structure_str(t) + "\n";
  return out;
}

DiagramExpression canonical(const DiagramExpression& expr) {
  std::map<std::string, std::pair<WickTerm, Rational>> acc;
  for (const auto& term : expr.terms) {
    WickTerm t = term;
    const std::string key = canonicalize_term(t);
    auto it = acc.find(key);
    if (it == acc.end()) {
      Rational c = t.sign_coeff;
      acc.emplace(key, std::make_pair(std::move(t), c));
    } else {
      it->second.second = it->second.second + t.sign_coeff;
    }
  }
  DiagramExpression out;
  out.order = expr.order;
  for (auto& [key, tc] : acc) {
    if (tc.second.is_zero()) continue;
    tc.first.sign_coeff = tc.second;
    out.terms.push_back(std::move(tc.first));
  }
  return out;
}

DiagramExpression expr_add(const DiagramExpression& a, const DiagramExpression& b) {
  if (!a.terms.empty() && !b.terms.empty() && a.order != b.order)
    throw std::logic_error("expr_add: mixed orders");
  DiagramExpression s;
  s.order = a.terms.empty() ? b.order : a.order;
  s.terms = a.terms;
  s.terms.insert(s.terms.end(), b.terms.begin(), b.terms.end());
  return canonical(s);
}

DiagramExpression expr_scale(const DiagramExpression& a, const Rational& c) {
  DiagramExpression s;
  s.order = a.order;
  if (c.is_zero()) return s;
  s.terms = a.terms;
  for (auto& t : s.terms) t.sign_coeff = t.sign_coeff * c;
  return s;
}

DiagramExpression adjoint(const DiagramExpression& a) {
  DiagramExpression s;
  s.order = a.order;
  for (const auto& term : a.terms) {
    WickTerm t = term;
    std::swap(t.creators, t.annihilators);
    for (auto& f : t.kernel) f.conjugated = !f.conjugated;
    s.terms.push_back(std::move(t));
  }
  return canonical(s);
}

DiagramExpression leg_part(const DiagramExpression& a, int creators, int annihilators) {
  DiagramExpression s;
  s.order = a.order;
  for (const auto& t : a.terms)
    if (static_cast<int>(t.creators.size()) == creators &&
        static_cast<int>(t.annihilators.size()) == annihilators)
      s.terms.push_back(t);
  return s;
}

// ---------------------------------------------------------------------------
// Interaction builders
// ---------------------------------------------------------------------------

DiagramExpression pair_interaction(int n) {
  if (n < 1) throw std::invalid_argument("pair_interaction: n must be >= 1");
  DiagramExpression e;
  e.order = 1;
  WickTerm up;
  KernelFactor kf;
  for (int i = 0; i < n; ++i) {
    Momentum m{{i, 1}};
    up.creators.push_back(m);
    kf.left_args.push_back(m);
  }
  up.kernel.push_back(kf);
  up.sign_coeff = Rational::of(1);
  WickTerm down = up;
  std::swap(down.creators, down.annihilators);
  down.kernel[0].conjugated = true;
  e.terms.push_back(std::move(up));
  e.terms.push_back(std::move(down));
  return canonical(e);
}

DiagramExpression trilinear_interaction() {
  DiagramExpression e;
  e.order = 1;
  const Momentum k0{{0, 1}}, k1{{1, 1}}, sum{{0, 1}, {1, 1}};
  WickTerm up;
  up.creators = {k0, k1};
  up.annihilators = {sum};
  KernelFactor kf;
  kf.left_args = {k0, k1};
  kf.right_args = {sum};
  kf.momentum_conserving = true;
  up.kernel.push_back(kf);
  up.sign_coeff = Rational::of(1);
  WickTerm down = up;
  std::swap(down.creators, down.annihilators);
  down.kernel[0].conjugated = true;
  e.terms.push_back(std::move(up));
  e.terms.push_back(std::move(down));
  return canonical(e);
}

// ---------------------------------------------------------------------------
// Gamma and Wick products
// ---------------------------------------------------------------------------

DiagramExpression gamma_op(const DiagramExpression& expr) {
  DiagramExpression out;
  out.order = expr.order;
  for (const auto& term : expr.terms) {
    const EnergySum delta = free_energy_sum(term);
    if (delta.empty())
      throw std::invalid_argument(
          "gamma_op: secular term, free-leg energies cancel symbolically: " +
          term_structure_str(term));
    WickTerm t = term;
    t.denominators.push_back(delta);
    out.terms.push_back(std::move(t));
  }
  return canonical(out);
}

DiagramExpression gamma_r(const DiagramExpression& expr) {
  return gamma_op(expr_add(expr, expr_scale(leg_part(expr, 1, 1), Rational::of(-1))));
}

DiagramExpression wick_connect(const DiagramExpression& a, const DiagramExpression& b,
                               WickMode mode) {
  DiagramExpression out;
  out.order = a.order + b.order;
  std::vector<std::vector<std::pair<int, int>>> matchings;
  for (const auto& ta : a.terms) {
    for (const auto& tb : b.terms) {
      matchings.clear();
      enumerate_matchings(ta.annihilators.size(), tb.creators.size(), matchings);
      for (const auto& m : matchings) {
        if (mode == WickMode::OneLine && m.size() != 1) continue;
        if (mode == WickMode::AllConnected && m.empty()) continue;
        MergeOutcome mo = merge_terms(ta, tb, m);
        if (mode == WickMode::AllConnected &&
            (term_components(mo.term, nullptr) != 1 || mo.term.kernel.empty()))
          continue;
        out.terms.push_back(std::move(mo.term));
      }
    }
  }
  return canonical(out);
}

DiagramExpression normal_product(const DiagramExpression& a, const DiagramExpression& b) {
  DiagramExpression out;
  out.order = a.order + b.order;
  for (const auto& ta : a.terms)
    for (const auto& tb : b.terms) out.terms.push_back(merge_terms(ta, tb, {}).term);
  return canonical(out);
}

// ---------------------------------------------------------------------------
// Dressing recursion
// ---------------------------------------------------------------------------

namespace {

// T as a power series in the coupling: T[k] collects the normal-ordered
// products of W parts over all partitions of k, each with its 1/(multiplicity!)
// symmetry factor; T[0] is the identity.
std::vector<DiagramExpression> t_parts(const std::vector<DiagramExpression>& W, int kmax) {
  std::vector<DiagramExpression> T(static_cast<std::size_t>(kmax) + 1);
  T[0] = make_identity();
  for (int k = 1; k <= kmax; ++k) {
    DiagramExpression acc = make_empty(k);
    std::vector<int> parts;
    std::function<void(int, int)> rec = [&](int remaining, int min_part) {
      if (remaining == 0) {
        long long sym = 1;
        for (std::size_t i = 0; i < parts.size();) {
          std::size_t j = i;
          while (j < parts.size() && parts[j] == parts[i]) ++j;
          for (std::size_t c = 2; c <= j - i; ++c) sym *= static_cast<long long>(c);
          i = j;
        }
        DiagramExpression prod = make_identity();
        for (int p : parts) prod = normal_product(prod, W[static_cast<std::size_t>(p)]);
        acc = expr_add(acc, expr_scale(prod, Rational::of(1, sym)));
        return;
      }
      for (int p = min_part; p <= remaining; ++p) {
        if (static_cast<std::size_t>(p) >= W.size() || W[static_cast<std::size_t>(p)].terms.empty())
          continue;
        parts.push_back(p);
        rec(remaining - p, p);
        parts.pop_back();
      }
    };
    rec(k, 1);
    T[static_cast<std::size_t>(k)] = acc;
  }
  return T;
}

}  // namespace

RecursionLadder solve_recursion(int max_order) {
  if (max_order < 1 || max_order > 4)
    throw std::invalid_argument("solve_recursion: order must be in [1, 4]");
  const DiagramExpression V = trilinear_interaction();
  RecursionLadder L;
  L.Q.assign(static_cast<std::size_t>(max_order) + 1, {});
  L.M.assign(static_cast<std::size_t>(max_order) + 1, {});
  std::vector<DiagramExpression> W(static_cast<std::size_t>(max_order) + 1);

  L.Q[1] = expr_scale(V, Rational::of(-1));
  L.M[1] = make_empty(1);
  W[1] = gamma_op(L.Q[1]);

  for (int k = 2; k <= max_order; ++k) {
    const auto T = t_parts(W, k - 1);
    DiagramExpression VT = wick_connect(V, T[static_cast<std::size_t>(k - 1)], WickMode::AllConnected);
    DiagramExpression Mk = leg_part(VT, 1, 1);
    if (k % 2 == 1 && !Mk.terms.empty())
      throw std::logic_error("solve_recursion: odd-order mass term is not empty");
    L.M[static_cast<std::size_t>(k)] = Mk;

    DiagramExpression WM = make_empty(k);
    for (int i = 1; i <= k - 2; ++i) {
      const auto& Mj = L.M[static_cast<std::size_t>(k - i)];
      if (Mj.terms.empty()) continue;
      WM = expr_add(WM, wick_connect(W[static_cast<std::size_t>(i)], Mj, WickMode::OneLine));
    }

    DiagramExpression Qk = expr_add(expr_scale(VT, Rational::of(-1)), Mk);
    Qk = expr_add(Qk, expr_scale(WM, Rational::of(-1)));
    L.Q[static_cast<std::size_t>(k)] = Qk;
    if (k < max_order) W[static_cast<std::size_t>(k)] = gamma_op(Qk);
  }
  return L;
}

DiagramExpression recursion_residual(const RecursionLadder& ladder, int order) {
  const int kmax = static_cast<int>(ladder.Q.size()) - 1;
  if (order < 1 || order > kmax)
    throw std::invalid_argument("recursion_residual: order outside the solved ladder");
  const DiagramExpression V = trilinear_interaction();
  if (order == 1) return expr_add(ladder.Q[1], V);

  std::vector<DiagramExpression> W(static_cast<std::size_t>(order));
  for (int j = 1; j <= order - 1; ++j)
    W[static_cast<std::size_t>(j)] = gamma_op(ladder.Q[static_cast<std::size_t>(j)]);
  const auto T = t_parts(W, order - 1);

  DiagramExpression R = ladder.Q[static_cast<std::size_t>(order)];
  R = expr_add(R, wick_connect(V, T[static_cast<std::size_t>(order - 1)], WickMode::AllConnected));
  R = expr_add(R, expr_scale(ladder.M[static_cast<std::size_t>(order)], Rational::of(-1)));
  for (int i = 1; i <= order - 2; ++i) {
    const auto& Mj = ladder.M[static_cast<std::size_t>(order - i)];
    if (Mj.terms.empty()) continue;
    R = expr_add(R, wick_connect(W[static_cast<std::size_t>(i)], Mj, WickMode::OneLine));
  }
  return canonical(R);
}

// ---------------------------------------------------------------------------
// Numeric compilation of one-particle quantities
// ---------------------------------------------------------------------------

namespace {

constexpr double kDenominatorFloor = 1e-9;

// Integrates one (1,1)-diagonal or vacuum term over its single internal
// momentum.  The external legs are pinned to p (label -1); `phase`, when
// present, multiplies the integrand by exp(i * t * phase value).  A
// denominator that vanishes or changes sign across the sampled support means
// the model decays, which these formulas do not cover.
std::complex<double> integrate_term(const ModelSpec& spec, const WickTerm& term_in,
                                    const EnergySum* phase_in, double t,
                                    std::span<const double> p,
                                    const QuadratureSettings& settings) {
  WickTerm w = term_in;
  EnergySum phase = phase_in ? *phase_in : EnergySum{};

  if (!(w.creators.empty() && w.annihilators.empty())) {
    if (w.creators.size() != 1 || w.annihilators.size() != 1)
      throw std::logic_error("integrate_term: unsupported leg shape");
    const Momentum target{{-1, 1}};
    Momentum diff = mom_combine(w.creators[0], target, -1);
    if (!diff.empty()) {
      int lab = -1, coeff = 0;
      for (const auto& e : diff) {
        if (e.first >= 0 && (e.second == 1 || e.second == -1)) {
          lab = e.first;
          coeff = e.second;
        }
      }
      if (lab < 0) throw std::logic_error("integrate_term: cannot pin the external leg");
      Momentum rest;
      for (const auto& e : diff)
        if (e.first != lab) rest.push_back(e);
      const Momentum repl = mom_scale(mom_normalize(rest), coeff == 1 ? -1 : 1);
      term_subst(w, lab, repl, &phase);
    }
    if (!(w.creators[0] == target) || !(w.annihilators[0] == target))
      throw std::logic_error("integrate_term: term is not diagonal in the external momentum");
  }

  const std::vector<int> labels = term_labels(w);
  if (labels.size() != 1)
    throw std::logic_error("integrate_term: expected exactly one internal momentum");
  const int internal = labels[0];
  const int d = spec.d;

  ModelSpec rule_spec = spec;
  rule_spec.family = InteractionFamily::LinearSolvable;
  rule_spec.n = 1;
  rule_spec.lambda = 1.0;
  QuadratureSettings s2 = settings;
  if (s2.momentum_cutoff <= 0.0) {
    double pnorm = 0.0;
    for (double x : p) pnorm += x * x;
    s2.momentum_cutoff = default_cutoff(rule_spec, s2.rel_tol) + std::sqrt(pnorm);
  }
  const MomentumRule rule = momentum_rule(rule_spec, s2);

  const double coeff =
      static_cast<double>(w.sign_coeff.num) / static_cast<double>(w.sign_coeff.den);
  const int arity = kernel_arity(spec);

  std::vector<double> scratch(static_cast<std::size_t>(d));
  std::vector<double> flat(static_cast<std::size_t>(arity) * static_cast<std::size_t>(d));
  std::vector<int> den_sign(w.denominators.size(), 0);

  auto combo_value = [&](const Momentum& m, std::span<const double> u, std::span<double> out) {
    std::fill(out.begin(), out.end(), 0.0);
    for (const auto& e : m) {
      const double c = static_cast<double>(e.second);
      if (e.first == -1) {
        for (int i = 0; i < d; ++i) out[static_cast<std::size_t>(i)] += c * p[static_cast<std::size_t>(i)];
      } else if (e.first == internal) {
        for (int i = 0; i < d; ++i) out[static_cast<std::size_t>(i)] += c * u[static_cast<std::size_t>(i)];
      } else {
        throw std::logic_error("integrate_term: unresolved label");
      }
    }
  };
  auto esum_value = [&](const EnergySum& s, std::span<const double> u) {
    double acc = 0.0;
    for (const auto& e : s) {
      combo_value(e.arg, u, scratch);
      acc += static_cast<double>(e.coeff) * omega(spec.dispersion, scratch);
    }
    return acc;
  };

  const Integrand f = [&](std::span<const double> u) -> std::complex<double> {
    std::complex<double> val(coeff, 0.0);
    for (const auto& kf : w.kernel) {
      std::size_t pos = 0;
      for (const auto& arg : kf.left_args) {
        combo_value(arg, u, std::span<double>(flat).subspan(pos, static_cast<std::size_t>(d)));
        pos += static_cast<std::size_t>(d);
      }
      for (const auto& arg : kf.right_args) {
        combo_value(arg, u, std::span<double>(flat).subspan(pos, static_cast<std::size_t>(d)));
        pos += static_cast<std::size_t>(d);
      }
      if (pos != flat.size()) throw std::logic_error("integrate_term: kernel arity mismatch");
      const std::complex<double> kv = eval_form_factor(spec, flat);
      val *= kf.conjugated ? std::conj(kv) : kv;
    }
    for (std::size_t j = 0; j < w.denominators.size(); ++j) {
      const double dv = esum_value(w.denominators[j], u);
      if (std::abs(dv) < kDenominatorFloor)
        throw NumericError(
            "one-particle energy denominator vanished on the sampled support; "
            "the model decays and the dressed expansion does not apply");
      const int sgn = dv > 0 ? 1 : -1;
      if (den_sign[j] == 0)
        den_sign[j] = sgn;
      else if (den_sign[j] != sgn)
        throw NumericError(
            "one-particle energy denominator changed sign across the sampled "
            "support; the model decays and the dressed expansion does not apply");
      val /= dv;
    }
    if (phase_in) {
      const double ph = esum_value(phase, u);
      val *= std::exp(std::complex<double>(0.0, t * ph));
    }
    return val;
  };

  return integrate_with_rule(rule, f).value;
}

void check_one_particle_args(const ModelSpec& spec, std::span<const double> p) {
  if (spec.family != InteractionFamily::TranslationInvariantTrilinear)
    throw std::invalid_argument("one-particle evaluation needs the trilinear family");
  if (static_cast<int>(p.size()) != spec.d)
    throw std::invalid_argument("external momentum has wrong dimension");
}

}  // namespace

std::complex<double> evaluate_M2(const ModelSpec& spec, std::span<const double> p,
                                 const QuadratureSettings& settings) {
  check_one_particle_args(spec, p);
  const RecursionLadder ladder = solve_recursion(2);
  std::complex<double> val(0.0, 0.0);
  for (const auto& term : ladder.M[2].terms)
    val += integrate_term(spec, term, nullptr, 0.0, p, settings);
  return val;
}

std::complex<double> one_particle_U(const ModelSpec& spec, std::span<const double> p, double t,
                                    const QuadratureSettings& settings) {
  check_one_particle_args(spec, p);
  if (!std::isfinite(t)) throw std::invalid_argument("one_particle_U: t must be finite");

  const std::complex<double> m2 = evaluate_M2(spec, p, settings);

  // Second-order piece of the dressed evolution: the (1,1) contraction of the
  // first dressing order against its adjoint, once with the free phase of the
  // left factor (c2) and once at t = 0 (b2); both share one node set.
  const DiagramExpression W1 =
      gamma_op(expr_scale(trilinear_interaction(), Rational::of(-1)));
  const DiagramExpression W1a = adjoint(W1);

  std::complex<double> b2(0.0, 0.0), c2(0.0, 0.0);
  std::vector<std::vector<std::pair<int, int>>> matchings;
  for (const auto& ta : W1.terms) {
    for (const auto& tb : W1a.terms) {
      matchings.clear();
      enumerate_matchings(ta.annihilators.size(), tb.creators.size(), matchings);
      for (const auto& m : matchings) {
        if (m.empty()) continue;
        MergeOutcome mo = merge_terms(ta, tb, m);
        if (mo.term.creators.size() != 1 || mo.term.annihilators.size() != 1) continue;
        b2 += integrate_term(spec, mo.term, &mo.left_phase, 0.0, p, settings);
        c2 += integrate_term(spec, mo.term, &mo.left_phase, t, p, settings);
      }
    }
  }

  const double l2 = spec.lambda * spec.lambda;
  const std::complex<double> phase =
      std::exp(std::complex<double>(0.0, -1.0) * l2 * m2 * t);
  return phase * (1.0 - l2 * b2) * (1.0 + l2 * c2);
}

}  // namespace abc
