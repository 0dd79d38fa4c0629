#pragma once

#include <atomic>
#include <cmath>
#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "objbias/taxonomy.hpp"

namespace testsupport {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "objbias") {
    static std::atomic<int> counter{0};
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            (tag + "-" + std::to_string(rd()) + "-" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& rel) const { return path_ / rel; }

 private:
  std::filesystem::path path_;
};

inline objbias::AttributeRecord record(const std::string& id, std::map<std::string, std::string> values) {
  objbias::AttributeRecord r;
  r.image_id = id;
  r.values = std::move(values);
  return r;
}

/// n records carrying `value` for `attribute`.
inline std::vector<objbias::AttributeRecord> repeat(const std::string& prefix, const std::string& attribute,
                                                    const std::string& value, int n) {
  std::vector<objbias::AttributeRecord> out;
  for (int i = 0; i < n; ++i) out.push_back(record(prefix + std::to_string(i), {{attribute, value}}));
  return out;
}

/// Closed attribute used for hand-built taxonomies.
inline objbias::AttributeSpec closed(const std::string& name, std::vector<std::string> values,
                                     objbias::AttributeScope scope = objbias::AttributeScope::kProduct) {
  return {name, scope, objbias::ValueMode::kClosed, std::move(values), objbias::AttributeOrigin::kDiscovered};
}

inline objbias::AttributeSpec open(const std::string& name,
                                   objbias::AttributeScope scope = objbias::AttributeScope::kProduct) {
  return {name, scope, objbias::ValueMode::kOpen, {}, objbias::AttributeOrigin::kDiscovered};
}

/// Taxonomy of arbitrary attributes; skips the fixed-set rules on purpose.
inline objbias::AttributeTaxonomy taxonomy_of(std::vector<objbias::AttributeSpec> attrs,
                                              std::string backend = "mock", std::string object = "thing") {
  objbias::AttributeTaxonomy t;
  t.backend_id = std::move(backend);
  t.object_id = std::move(object);
  t.attributes = std::move(attrs);
  return t;
}

// ---- Independent oracles -------------------------------------------------

/// Shannon entropy in bits of an unnormalized count/probability vector.
inline double oracle_entropy(const std::vector<double>& w) {
  double total = 0;
  for (double x : w) total += x;
  double h = 0;
  for (double x : w) {
    if (x > 0) {
      const double p = x / total;
      h -= p * std::log(p) / std::log(2.0);
    }
  }
  return h;
}

/// JS divergence through the entropy identity JS = H(M) - (H(P) + H(Q)) / 2.
inline double oracle_js(const std::map<std::string, double>& p, const std::map<std::string, double>& q) {
  double tp = 0, tq = 0;
  for (auto& [k, v] : p) tp += v;
  for (auto& [k, v] : q) tq += v;
  std::map<std::string, double> m;
  std::vector<double> pv, qv;
  for (auto& [k, v] : p) {
    m[k] += 0.5 * v / tp;
    pv.push_back(v / tp);
  }
  for (auto& [k, v] : q) {
    m[k] += 0.5 * v / tq;
    qv.push_back(v / tq);
  }
  std::vector<double> mv;
  for (auto& [k, v] : m) mv.push_back(v);
  return oracle_entropy(mv) - 0.5 * (oracle_entropy(pv) + oracle_entropy(qv));
}

/// Value counts of one attribute, ignoring "unparseable".
inline std::map<std::string, double> oracle_counts(const std::vector<objbias::AttributeRecord>& recs,
                                                   const std::string& attr) {
  std::map<std::string, double> c;
  for (const auto& r : recs) {
    auto it = r.values.find(attr);
    if (it != r.values.end() && it->second != "unparseable") c[it->second] += 1;
  }
  return c;
}

/// Mean over attributes of oracle_js between the two record sets.
inline double oracle_bds(const std::vector<objbias::AttributeRecord>& a, const std::vector<objbias::AttributeRecord>& b,
                         const std::vector<std::string>& attrs) {
  double s = 0;
  int n = 0;
  for (const auto& name : attrs) {
    auto ca = oracle_counts(a, name), cb = oracle_counts(b, name);
    if (ca.empty() || cb.empty()) continue;
    s += oracle_js(ca, cb);
    ++n;
  }
  return n ? s / n : 0.0;
}

}  // namespace testsupport
