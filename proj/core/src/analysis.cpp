#include "objbias/analysis.hpp"

#include <atomic>
#include <mutex>
#include <thread>

#include "objbias/errors.hpp"
#include "objbias/prompt_matrix.hpp"
#include "objbias/util.hpp"

namespace objbias {

using nlohmann::json;

namespace {

template <class Map>
json map_json(const Map& m) {
  json j = json::object();
  for (const auto& [k, v] : m) j[k] = v;
  return j;
}

std::map<std::string, double> doubles(const json& j) {
  std::map<std::string, double> out;
  for (const auto& [k, v] : j.items()) out[k] = v.get<double>();
  return out;
}

json bds_json(const BdsResult& r) {
  return {{"backend", r.backend_id},      {"object", r.object_id},   {"condition", r.condition_id},
          {"dimension", r.dimension_id},  {"group", r.group_id},     {"score", r.score},
          {"per_attribute", map_json(r.per_attribute)}, {"dropped_attributes", r.dropped_attributes},
          {"p_value", r.p_value},         {"significant", r.significant}};
}

BdsResult bds_from(const json& j) {
  BdsResult r;
  r.backend_id = j.at("backend");
  r.object_id = j.at("object");
  r.condition_id = j.at("condition");
  r.dimension_id = j.at("dimension");
  r.group_id = j.at("group");
  r.score = j.at("score");
  r.per_attribute = doubles(j.at("per_attribute"));
  r.dropped_attributes = j.value("dropped_attributes", std::vector<std::string>{});
  r.p_value = j.at("p_value");
  r.significant = j.at("significant");
  return r;
}

json cds_json(const CdsResult& r) {
  return {{"backend", r.backend_id}, {"object", r.object_id}, {"dimension", r.dimension_id},
          {"score", r.score}, {"per_attribute", map_json(r.per_attribute)}, {"pair_count", r.pair_count},
          {"dropped_attributes", r.dropped_attributes}};
}

CdsResult cds_from(const json& j) {
  CdsResult r;
  r.backend_id = j.at("backend");
  r.object_id = j.at("object");
  r.dimension_id = j.at("dimension");
  r.score = j.at("score");
  r.per_attribute = doubles(j.at("per_attribute"));
  r.pair_count = j.at("pair_count");
  r.dropped_attributes = j.value("dropped_attributes", std::vector<std::string>{});
  return r;
}

json vac_json(const VacResult& r) {
  return {{"backend", r.backend_id}, {"object", r.object_id}, {"condition", r.condition_id},
          {"score", r.score}, {"per_attribute", map_json(r.per_attribute)},
          {"dropped_attributes", r.dropped_attributes}};
}

VacResult vac_from(const json& j) {
  VacResult r;
  r.backend_id = j.at("backend");
  r.object_id = j.at("object");
  r.condition_id = j.at("condition");
  r.score = j.at("score");
  r.per_attribute = doubles(j.at("per_attribute"));
  r.dropped_attributes = j.value("dropped_attributes", std::vector<std::string>{});
  return r;
}

}  // namespace

json to_json(const BiasReport& report) {
  json objects = json::array();
  for (const auto& o : report.objects) {
    objects.push_back({{"id", o.id}, {"display_name", o.display_name}, {"phrase", o.phrase}});
  }
  json dims = json::array();
  for (const auto& d : report.dimensions) dims.push_back({{"id", d.id}, {"groups", d.groups}});
  json bds = json::array(), cds = json::array(), vac = json::array(), seg = json::array(), shifts = json::array();
  for (const auto& r : report.bds) bds.push_back(bds_json(r));
  for (const auto& r : report.cds) cds.push_back(cds_json(r));
  for (const auto& r : report.vac) vac.push_back(vac_json(r));
  for (const auto& s : report.segregation) {
    seg.push_back({{"backend", s.backend_id}, {"object", s.object_id}, {"condition", s.condition_id},
                   {"attribute", s.attribute}, {"value", s.value}, {"count", s.count}});
  }
  for (const auto& s : report.shifts) {
    shifts.push_back({{"backend", s.backend_id},         {"object", s.object_id},
                      {"condition", s.condition_id},     {"attribute", s.attribute},
                      {"base_value", s.base_value},      {"demo_value", s.demo_value},
                      {"base_dominance", s.base_dominance}, {"demo_dominance", s.demo_dominance},
                      {"tie_broken", s.tie_broken}});
  }
  json j = {{"format", "objbias-bias-report/1"},
            {"config_digest", report.config_digest},
            {"alpha", report.alpha},
            {"n_permutations", report.n_permutations},
            {"permutation_seed", report.permutation_seed},
            {"segregation_min_count", report.segregation_min_count},
            {"shift_threshold", report.shift_threshold},
            {"backends", report.backends},
            {"objects", objects},
            {"dimensions", dims},
            {"bds", bds},
            {"cds", cds},
            {"vac", vac},
            {"segregation", seg},
            {"shifts", shifts},
            {"exclusions", map_json(report.exclusions)},
            {"notes", report.notes}};
  j["agreement"] = report.agreement ? to_json(*report.agreement) : json(nullptr);
  return j;
}

BiasReport bias_report_from_json(const json& j) {
  BiasReport r;
  r.config_digest = j.value("config_digest", "");
  r.alpha = j.value("alpha", 0.01);
  r.n_permutations = j.value("n_permutations", 1000);
  r.permutation_seed = j.value("permutation_seed", std::int64_t{0});
  r.segregation_min_count = j.value("segregation_min_count", std::size_t{20});
  r.shift_threshold = j.value("shift_threshold", 0.75);
  r.backends = j.value("backends", std::vector<std::string>{});
  for (const auto& o : j.value("objects", json::array())) {
    r.objects.push_back({o.at("id"), o.value("display_name", ""), o.value("phrase", "")});
  }
  for (const auto& d : j.value("dimensions", json::array())) {
    r.dimensions.push_back({d.at("id"), d.at("groups").get<std::vector<std::string>>()});
  }
  for (const auto& x : j.value("bds", json::array())) r.bds.push_back(bds_from(x));
  for (const auto& x : j.value("cds", json::array())) r.cds.push_back(cds_from(x));
  for (const auto& x : j.value("vac", json::array())) r.vac.push_back(vac_from(x));
  for (const auto& s : j.value("segregation", json::array())) {
    r.segregation.push_back({s.at("backend"), s.at("object"), s.at("condition"), s.at("attribute"), s.at("value"),
                             s.at("count").get<std::size_t>()});
  }
  for (const auto& s : j.value("shifts", json::array())) {
    r.shifts.push_back({s.at("backend"), s.at("object"), s.at("condition"), s.at("attribute"), s.at("base_value"),
                        s.at("demo_value"), s.at("base_dominance"), s.at("demo_dominance"),
                        s.value("tie_broken", false)});
  }
  const json exclusions = j.value("exclusions", json::object());
  for (const auto& [k, v] : exclusions.items()) r.exclusions[k] = v.get<std::size_t>();
  r.notes = j.value("notes", std::vector<std::string>{});
  if (j.contains("agreement") && !j["agreement"].is_null()) r.agreement = agreement_from_json(j["agreement"]);
  return r;
}

AnalysisOptions AnalysisOptions::from_config(const AuditConfig& config) {
  AnalysisOptions o;
  o.alpha = config.alpha;
  o.n_permutations = config.n_permutations;
  o.seed = config.seeds.permutation;
  o.segregation_min_count = static_cast<std::size_t>(config.segregation_min_count);
  o.shift_threshold = config.shift_dominance_threshold;
  return o;
}

std::uint64_t cell_seed(std::int64_t base, std::string_view backend_id, std::string_view condition_id) {
  std::string key(backend_id);
  key += '|';
  key += condition_id;
  return static_cast<std::uint64_t>(base) ^ stable_hash64(key);
}

BiasReport analyze(const AuditConfig& config, const std::vector<std::string>& backend_ids,
                   const Manifest& manifest, const std::vector<AttributeTaxonomy>& taxonomies,
                   const RecordsByPair& records, const AnalysisOptions& options) {
  BiasReport report;
  report.config_digest = config_digest(config);
  report.alpha = options.alpha;
  report.n_permutations = options.n_permutations;
  report.permutation_seed = options.seed;
  report.segregation_min_count = options.segregation_min_count;
  report.shift_threshold = options.shift_threshold;
  report.backends = backend_ids;
  report.objects = config.objects;
  for (const auto& d : config.dimensions) {
    DimensionLayout layout{d.id, {}};
    for (const auto& g : d.groups) layout.groups.push_back(g.id);
    report.dimensions.push_back(std::move(layout));
  }

  const auto matrix = build_matrix(config);
  std::map<std::string, const ImageRecord*> image_index;
  for (const auto& r : manifest.records) image_index[r.image_id] = &r;

  struct PermCell {
    const AttributeTaxonomy* taxonomy;
    const std::vector<AttributeRecord>* base;
    const std::vector<AttributeRecord>* group;
    std::size_t bds_index;
  };
  std::vector<PermCell> perm_cells;
  // Per-pair condition buckets must outlive the permutation pool.
  std::vector<std::unique_ptr<std::map<std::string, std::vector<AttributeRecord>>>> buckets_store;

  for (const auto& backend : backend_ids) {
    for (const auto& object : config.objects) {
      const std::string pair = backend + "/" + object.id;
      const AttributeTaxonomy* taxonomy = nullptr;
      for (const auto& t : taxonomies) {
        if (t.backend_id == backend && t.object_id == object.id) taxonomy = &t;
      }
      auto rec_it = records.find(pair);
      if (taxonomy == nullptr || rec_it == records.end()) {
        report.notes.push_back(pair + ": no taxonomy or attribute records");
        continue;
      }

      auto& by_condition = *buckets_store.emplace_back(
          std::make_unique<std::map<std::string, std::vector<AttributeRecord>>>());
      std::size_t excluded = 0;
      for (const auto& rec : rec_it->second) {
        auto img = image_index.find(rec.image_id);
        if (img == image_index.end()) {
          report.notes.push_back(pair + ": attribute record " + rec.image_id + " not in manifest");
          continue;
        }
        for (const auto& [name, value] : rec.values) {
          if (value == kUnparseable) ++excluded;
        }
        by_condition[img->second->condition_id].push_back(rec);
      }
      report.exclusions[pair] = excluded;

      std::vector<const PromptCondition*> conditions;
      for (const auto& c : matrix) {
        if (c.object_id == object.id) conditions.push_back(&c);
      }
      std::vector<std::vector<AttributeRecord>> all_sets;
      for (const auto* c : conditions) {
        if (auto it = by_condition.find(c->id); it != by_condition.end()) all_sets.push_back(it->second);
      }
      const auto open_k = open_cardinality(all_sets, *taxonomy);

      for (const auto* c : conditions) {
        auto it = by_condition.find(c->id);
        if (it == by_condition.end() || it->second.empty()) {
          report.notes.push_back(backend + " " + c->id + ": no records");
          continue;
        }
        auto v = vac(it->second, *taxonomy, open_k);
        v.condition_id = c->id;
        report.vac.push_back(std::move(v));
      }

      const std::string base_id = condition_id(object.id, std::nullopt);
      auto base_it = by_condition.find(base_id);
      const bool have_base = base_it != by_condition.end() && !base_it->second.empty();

      std::map<std::string, std::vector<AttributeRecord>> demographic;
      for (const auto& dim : config.dimensions) {
        std::map<std::string, std::vector<AttributeRecord>> groups;
        for (const auto& g : dim.groups) {
          const std::string cid = condition_id(object.id, GroupRef{dim.id, g.id});
          auto git = by_condition.find(cid);
          if (git == by_condition.end() || git->second.empty()) continue;
          groups[g.id] = git->second;
          demographic[cid] = git->second;
          if (!have_base) continue;
          try {
            auto b = bds(base_it->second, git->second, *taxonomy);
            b.condition_id = cid;
            b.dimension_id = dim.id;
            b.group_id = g.id;
            report.bds.push_back(std::move(b));
            perm_cells.push_back({taxonomy, &base_it->second, &git->second, report.bds.size() - 1});
          } catch (const ValidationError& e) {
            report.notes.push_back(backend + " " + cid + ": " + e.what());
          }
          auto shifts = detect_shifts(base_it->second, git->second, *taxonomy, options.shift_threshold, cid);
          report.shifts.insert(report.shifts.end(), shifts.begin(), shifts.end());
        }
        if (groups.size() >= 2) {
          auto c = cds(groups, *taxonomy);
          c.dimension_id = dim.id;
          report.cds.push_back(std::move(c));
        }
      }
      if (!have_base) report.notes.push_back(backend + " " + base_id + ": no base records");

      // Segregation in matrix order over demographic conditions.
      for (const auto* c : conditions) {
        auto it = demographic.find(c->id);
        if (it == demographic.end()) continue;
        auto cases = detect_segregation({{c->id, it->second}}, *taxonomy, options.segregation_min_count);
        report.segregation.insert(report.segregation.end(), cases.begin(), cases.end());
      }
    }
  }

  std::atomic<std::size_t> cursor{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  {
    const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
    const std::size_t n = std::min<std::size_t>(options.workers > 0 ? options.workers : hw, perm_cells.size());
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < n; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i; (i = cursor.fetch_add(1)) < perm_cells.size();) {
          const auto& cell = perm_cells[i];
          auto& result = report.bds[cell.bds_index];
          try {
            result.p_value = permutation_test(*cell.base, *cell.group, *cell.taxonomy, options.n_permutations,
                                              cell_seed(options.seed, result.backend_id, result.condition_id));
            result.significant = result.p_value < options.alpha;
          } catch (...) {
            std::lock_guard lock(error_mutex);
            if (!error) error = std::current_exception();
          }
        }
      });
    }
  }
  if (error) std::rethrow_exception(error);
  return report;
}

BiasReport run_analysis(const std::filesystem::path& root, const AuditConfig& config,
                        const std::vector<std::string>& backend_ids, const AnalysisOptions& options) {
  const Manifest manifest = load_manifest(root);
  std::vector<AttributeTaxonomy> taxonomies;
  RecordsByPair records;
  for (const auto& backend : backend_ids) {
    for (const auto& object : config.objects) {
      const auto tpath = artifact_paths::taxonomy(root, backend, object.id);
      if (!std::filesystem::exists(tpath)) throw MissingArtifactError(tpath.string());
      taxonomies.push_back(load_taxonomy(tpath));
      const auto apath = artifact_paths::attributes(root, backend, object.id);
      if (!std::filesystem::exists(apath)) throw MissingArtifactError(apath.string());
      records[backend + "/" + object.id] = load_attribute_records(apath);
    }
  }
  auto report = analyze(config, backend_ids, manifest, taxonomies, records, options);
  const auto annotations_path = root / kAnnotationsFile;
  if (std::filesystem::exists(annotations_path)) {
    const auto annotations = load_annotations(annotations_path);
    if (!annotations.empty()) {
      std::vector<AttributeRecord> all;
      for (const auto& [pair, recs] : records) all.insert(all.end(), recs.begin(), recs.end());
      report.agreement = compute_agreement(annotations, all, &manifest);
    }
  }
  return report;
}

std::filesystem::path bias_report_path(const std::filesystem::path& root) {
  return root / "analysis" / "bias_report.json";
}

BiasReport load_bias_report(const std::filesystem::path& path) {
  return bias_report_from_json(json::parse(read_file_text(path)));
}

void save_bias_report(const std::filesystem::path& path, const BiasReport& report) {
  write_file_atomic(path, to_json(report).dump(2) + "\n");
}

}  // namespace objbias
