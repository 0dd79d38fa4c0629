#include "objbias/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <random>
#include <set>

#include "objbias/errors.hpp"

namespace objbias {

namespace {

constexpr double kTieEpsilon = 1e-12;

const std::string* parseable_value(const AttributeRecord& r, const std::string& attribute) {
  auto it = r.values.find(attribute);
  if (it == r.values.end() || it->second == kUnparseable || it->second.empty()) return nullptr;
  return &it->second;
}

std::map<std::string, std::size_t> count_values(const std::vector<AttributeRecord>& records,
                                                const std::string& attribute, std::size_t* excluded = nullptr) {
  std::map<std::string, std::size_t> counts;
  std::size_t skipped = 0;
  for (const auto& r : records) {
    if (const auto* v = parseable_value(r, attribute)) {
      ++counts[*v];
    } else {
      ++skipped;
    }
  }
  if (excluded) *excluded = skipped;
  return counts;
}

double clamp01(double x) { return std::clamp(x, 0.0, 1.0); }

// JS over aligned count vectors.
double js_counts(const std::size_t* a, std::size_t na, const std::size_t* b, std::size_t nb, std::size_t k) {
  double sum = 0.0;
  const double ia = 1.0 / static_cast<double>(na);
  const double ib = 1.0 / static_cast<double>(nb);
  for (std::size_t i = 0; i < k; ++i) {
    const double p = static_cast<double>(a[i]) * ia;
    const double q = static_cast<double>(b[i]) * ib;
    const double m = 0.5 * (p + q);
    if (p > 0) sum += p * std::log2(p / m);
    if (q > 0) sum += q * std::log2(q / m);
  }
  return clamp01(0.5 * sum);
}

// Records pooled and coded per attribute for fast repeated BDS evaluation.
struct EncodedPool {
  std::vector<std::vector<int>> codes;  // [attribute][record]; -1 = unparseable
  std::vector<std::size_t> cardinality;

  EncodedPool(const std::vector<AttributeRecord>& a, const std::vector<AttributeRecord>& b,
              const AttributeTaxonomy& taxonomy) {
    for (const auto& spec : taxonomy.attributes) {
      std::map<std::string, int> index;
      std::vector<int> column;
      column.reserve(a.size() + b.size());
      for (const auto* side : {&a, &b}) {
        for (const auto& r : *side) {
          const auto* v = parseable_value(r, spec.name);
          if (v == nullptr) {
            column.push_back(-1);
            continue;
          }
          auto [it, fresh] = index.emplace(*v, static_cast<int>(index.size()));
          column.push_back(it->second);
        }
      }
      codes.push_back(std::move(column));
      cardinality.push_back(index.size());
    }
  }

  // BDS of order[0, n1) vs order[n1, end); attributes lacking values on a side are skipped.
  double bds(const std::vector<std::size_t>& order, std::size_t n1, std::vector<std::size_t>& scratch) const {
    double total = 0.0;
    std::size_t used = 0;
    for (std::size_t a = 0; a < codes.size(); ++a) {
      const std::size_t k = cardinality[a];
      scratch.assign(2 * k, 0);
      std::size_t na = 0, nb = 0;
      const auto& column = codes[a];
      for (std::size_t i = 0; i < order.size(); ++i) {
        const int c = column[order[i]];
        if (c < 0) continue;
        if (i < n1) {
          ++scratch[static_cast<std::size_t>(c)];
          ++na;
        } else {
          ++scratch[k + static_cast<std::size_t>(c)];
          ++nb;
        }
      }
      if (na == 0 || nb == 0) continue;
      total += js_counts(scratch.data(), na, scratch.data() + k, nb, k);
      ++used;
    }
    return used == 0 ? 0.0 : total / static_cast<double>(used);
  }
};

struct Mode {
  std::string value;
  double share = 0.0;
  bool tied = false;
};

std::optional<Mode> mode_of(const std::vector<AttributeRecord>& records, const std::string& attribute) {
  const auto counts = count_values(records, attribute);
  if (counts.empty()) return std::nullopt;
  std::size_t total = 0, best = 0;
  for (const auto& [v, c] : counts) {
    total += c;
    best = std::max(best, c);
  }
  Mode m;
  std::size_t at_best = 0;
  for (const auto& [v, c] : counts) {
    if (c != best) continue;
    if (at_best++ == 0) m.value = v;
  }
  m.tied = at_best > 1;
  m.share = static_cast<double>(best) / static_cast<double>(total);
  return m;
}

}  // namespace

double Distribution::prob(const std::string& value) const {
  auto it = std::lower_bound(support.begin(), support.end(), value);
  if (it == support.end() || *it != value) return 0.0;
  return probs[static_cast<std::size_t>(it - support.begin())];
}

Distribution Distribution::from_weights(std::string attribute, const std::map<std::string, double>& weights) {
  Distribution d;
  d.attribute = std::move(attribute);
  double total = 0.0;
  for (const auto& [v, w] : weights) {
    if (w < 0 || !std::isfinite(w)) throw ValidationError("invalid weight for value '" + v + "'");
    total += w;
  }
  if (total <= 0) throw ValidationError("distribution for '" + d.attribute + "' has no mass");
  for (const auto& [v, w] : weights) {
    if (w == 0) continue;
    d.support.push_back(v);
    d.probs.push_back(w / total);
  }
  d.n = d.support.size();
  return d;
}

Distribution estimate_distribution(const std::vector<AttributeRecord>& records, const std::string& attribute) {
  Distribution d;
  d.attribute = attribute;
  const auto counts = count_values(records, attribute, &d.exclusions);
  for (const auto& [v, c] : counts) d.n += c;
  if (d.n == 0) throw ValidationError("no parseable values for attribute '" + attribute + "'");
  for (const auto& [v, c] : counts) {
    d.support.push_back(v);
    d.probs.push_back(static_cast<double>(c) / static_cast<double>(d.n));
  }
  return d;
}

double js_divergence(const Distribution& p, const Distribution& q) {
  if (p.attribute != q.attribute) {
    throw ValidationError("js_divergence: attribute mismatch ('" + p.attribute + "' vs '" + q.attribute + "')");
  }
  double sum = 0.0;
  std::size_t i = 0, j = 0;
  while (i < p.support.size() || j < q.support.size()) {
    double pi = 0.0, qj = 0.0;
    if (j >= q.support.size() || (i < p.support.size() && p.support[i] < q.support[j])) {
      pi = p.probs[i++];
    } else if (i >= p.support.size() || q.support[j] < p.support[i]) {
      qj = q.probs[j++];
    } else {
      pi = p.probs[i++];
      qj = q.probs[j++];
    }
    const double m = 0.5 * (pi + qj);
    if (pi > 0) sum += pi * std::log2(pi / m);
    if (qj > 0) sum += qj * std::log2(qj / m);
  }
  return clamp01(0.5 * sum);
}

double entropy_bits(const std::vector<double>& probs) {
  double h = 0.0;
  for (double p : probs) {
    if (p > 0) h -= p * std::log2(p);
  }
  return std::max(0.0, h);
}

double concentration_term(const std::vector<double>& probs, std::size_t k) {
  if (k <= 1) return 1.0;
  return clamp01(1.0 - entropy_bits(probs) / std::log2(static_cast<double>(k)));
}

BdsResult bds(const std::vector<AttributeRecord>& base, const std::vector<AttributeRecord>& group,
              const AttributeTaxonomy& taxonomy) {
  if (base.empty() || group.empty()) throw ValidationError("bds: base and group record sets must be nonempty");
  BdsResult r;
  r.backend_id = taxonomy.backend_id;
  r.object_id = taxonomy.object_id;
  double total = 0.0;
  for (const auto& spec : taxonomy.attributes) {
    std::size_t unused = 0;
    if (count_values(base, spec.name, &unused).empty() || count_values(group, spec.name, &unused).empty()) {
      r.dropped_attributes.push_back(spec.name);
      continue;
    }
    const double js = js_divergence(estimate_distribution(base, spec.name), estimate_distribution(group, spec.name));
    r.per_attribute[spec.name] = js;
    total += js;
  }
  if (r.per_attribute.empty()) throw ValidationError("bds: no attribute has parseable values on both sides");
  r.score = total / static_cast<double>(r.per_attribute.size());
  return r;
}

CdsResult cds(const std::map<std::string, std::vector<AttributeRecord>>& groups, const AttributeTaxonomy& taxonomy) {
  if (groups.size() < 2) throw ValidationError("cds: at least 2 groups are required");
  CdsResult r;
  r.backend_id = taxonomy.backend_id;
  r.object_id = taxonomy.object_id;
  r.pair_count = groups.size() * (groups.size() - 1) / 2;
  double total = 0.0;
  for (const auto& spec : taxonomy.attributes) {
    std::vector<Distribution> dists;
    bool missing = false;
    for (const auto& [id, records] : groups) {
      if (count_values(records, spec.name).empty()) {
        missing = true;
        break;
      }
      dists.push_back(estimate_distribution(records, spec.name));
    }
    if (missing) {
      r.dropped_attributes.push_back(spec.name);
      continue;
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < dists.size(); ++i) {
      for (std::size_t j = i + 1; j < dists.size(); ++j) sum += js_divergence(dists[i], dists[j]);
    }
    const double mean = sum / static_cast<double>(r.pair_count);
    r.per_attribute[spec.name] = mean;
    total += mean;
  }
  if (!r.per_attribute.empty()) r.score = total / static_cast<double>(r.per_attribute.size());
  return r;
}

OpenCardinality open_cardinality(const std::vector<std::vector<AttributeRecord>>& conditions,
                                 const AttributeTaxonomy& taxonomy) {
  OpenCardinality out;
  for (const auto& spec : taxonomy.attributes) {
    if (spec.mode != ValueMode::kOpen) continue;
    std::set<std::string> seen;
    for (const auto& records : conditions) {
      for (const auto& r : records) {
        if (const auto* v = parseable_value(r, spec.name)) seen.insert(*v);
      }
    }
    out[spec.name] = seen.size();
  }
  return out;
}

VacResult vac(const std::vector<AttributeRecord>& records, const AttributeTaxonomy& taxonomy,
              const OpenCardinality& open_k) {
  if (records.empty()) throw ValidationError("vac: record set is empty");
  VacResult r;
  r.backend_id = taxonomy.backend_id;
  r.object_id = taxonomy.object_id;
  double total = 0.0;
  for (const auto& spec : taxonomy.attributes) {
    const auto counts = count_values(records, spec.name);
    if (counts.empty()) {
      r.dropped_attributes.push_back(spec.name);
      continue;
    }
    const auto d = estimate_distribution(records, spec.name);
    std::size_t k = 0;
    if (spec.mode == ValueMode::kClosed) {
      k = spec.allowed_values.size();
    } else if (auto it = open_k.find(spec.name); it != open_k.end()) {
      k = std::max(it->second, d.support.size());
    } else {
      k = d.support.size();
    }
    const double term = concentration_term(d.probs, k);
    r.per_attribute[spec.name] = term;
    total += term;
  }
  if (!r.per_attribute.empty()) r.score = total / static_cast<double>(r.per_attribute.size());
  return r;
}

double permutation_test(const std::vector<AttributeRecord>& base, const std::vector<AttributeRecord>& group,
                        const AttributeTaxonomy& taxonomy, int n_iter, std::uint64_t seed) {
  if (n_iter < 1) throw ValidationError("permutation_test: n_iter must be >= 1");
  if (base.empty() || group.empty()) throw ValidationError("permutation_test: record sets must be nonempty");
  const EncodedPool pool(base, group, taxonomy);
  std::vector<std::size_t> order(base.size() + group.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<std::size_t> scratch;
  const double observed = pool.bds(order, base.size(), scratch);

  std::mt19937_64 rng(seed);
  std::size_t at_least = 0;
  for (int i = 0; i < n_iter; ++i) {
    std::shuffle(order.begin(), order.end(), rng);
    if (pool.bds(order, base.size(), scratch) >= observed - kTieEpsilon) ++at_least;
  }
  return static_cast<double>(1 + at_least) / static_cast<double>(1 + n_iter);
}

std::vector<SegregationCase> detect_segregation(const std::map<std::string, std::vector<AttributeRecord>>& conditions,
                                                const AttributeTaxonomy& taxonomy, std::size_t min_count) {
  std::vector<SegregationCase> out;
  for (const auto& [condition, records] : conditions) {
    for (const auto& spec : taxonomy.attributes) {
      const auto counts = count_values(records, spec.name);
      if (counts.size() != 1) continue;
      const auto& [value, n] = *counts.begin();
      if (n < min_count) continue;
      out.push_back({taxonomy.backend_id, taxonomy.object_id, condition, spec.name, value, n});
    }
  }
  return out;
}

std::vector<ShiftRecord> detect_shifts(const std::vector<AttributeRecord>& base,
                                       const std::vector<AttributeRecord>& group,
                                       const AttributeTaxonomy& taxonomy, double dominance_threshold,
                                       const std::string& condition_id) {
  std::vector<ShiftRecord> out;
  for (const auto& spec : taxonomy.attributes) {
    const auto b = mode_of(base, spec.name);
    const auto g = mode_of(group, spec.name);
    if (!b || !g || b->value == g->value) continue;
    if (b->share < dominance_threshold - kTieEpsilon || g->share < dominance_threshold - kTieEpsilon) continue;
    out.push_back({taxonomy.backend_id, taxonomy.object_id, condition_id, spec.name, b->value, g->value, b->share,
                   g->share, b->tied || g->tied});
  }
  return out;
}

}  // namespace objbias
