#include "objbias/generation.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <map>
#include <mutex>
#include <set>
#include <thread>
#include <tuple>

#include "objbias/errors.hpp"
#include "objbias/util.hpp"

namespace objbias {

using nlohmann::json;

namespace {

using Key = std::tuple<std::string, std::string, int>;  // backend, condition, index

Key key_of(const ImageRecord& r) { return {r.backend_id, r.condition_id, r.replicate_index}; }

bool file_matches(const std::filesystem::path& root, const ImageRecord& r) {
  const auto path = root / r.file_path;
  if (!std::filesystem::exists(path)) return false;
  return sha256_hex(read_file_bytes(path)) == r.content_hash;
}

struct Task {
  std::size_t backend_index;
  const PromptCondition* condition;
  std::size_t condition_index;
  int replicate_index;
};

json to_json(const FailureRecord& f) {
  return {{"backend_id", f.backend_id}, {"condition_id", f.condition_id},
          {"replicate_index", f.replicate_index}, {"round", f.round},
          {"kind", f.kind}, {"reason", f.reason}};
}

}  // namespace

json to_json(const CompletenessReport& report) {
  json missing = json::array();
  for (const auto& m : report.missing) {
    missing.push_back({{"backend_id", m.backend_id}, {"condition_id", m.condition_id},
                       {"replicate_index", m.replicate_index}});
  }
  json mismatches = json::array();
  for (const auto& h : report.hash_mismatches) {
    mismatches.push_back({{"image_id", h.image_id}, {"file_path", h.file_path},
                          {"expected_hash", h.expected_hash}, {"actual_hash", h.actual_hash}});
  }
  return {{"complete", report.empty()},
          {"missing", missing},
          {"hash_mismatches", mismatches},
          {"unexpected", report.unexpected}};
}

CompletenessReport validate_manifest(const Manifest& manifest,
                                     const std::vector<PromptCondition>& matrix,
                                     const std::vector<std::string>& backend_ids, int n_per_condition,
                                     const std::filesystem::path& root) {
  CompletenessReport report;
  std::set<Key> expected;
  for (const auto& b : backend_ids) {
    for (const auto& c : matrix) {
      for (int i = 0; i < n_per_condition; ++i) expected.emplace(b, c.id, i);
    }
  }

  std::set<Key> present;
  for (const auto& r : manifest.records) {
    const Key k = key_of(r);
    if (!expected.contains(k) || !present.insert(k).second) {
      report.unexpected.push_back(r.image_id);
      continue;
    }
    const auto path = root / r.file_path;
    std::string actual;
    if (std::filesystem::exists(path)) actual = sha256_hex(read_file_bytes(path));
    if (actual != r.content_hash) {
      report.hash_mismatches.push_back({r.image_id, r.file_path, r.content_hash, actual});
    }
  }
  for (const auto& b : backend_ids) {
    for (const auto& c : matrix) {
      for (int i = 0; i < n_per_condition; ++i) {
        if (!present.contains({b, c.id, i})) report.missing.push_back({b, c.id, i});
      }
    }
  }
  return report;
}

GenerationResult generate_corpus(const std::vector<PromptCondition>& matrix,
                                 const std::vector<std::shared_ptr<ImageBackend>>& backends,
                                 const GenerationOptions& options) {
  if (options.n_per_condition < 1) throw ValidationError("n_per_condition must be >= 1");
  if (options.max_in_flight < 1) throw ValidationError("max_in_flight must be >= 1");
  for (const auto& b : backends) b->check_credentials();

  const auto& root = options.root;
  std::filesystem::create_directories(root);
  const auto manifest_path = root / manifest_files::kRecords;
  const auto failures_path = root / manifest_files::kFailures;

  std::map<Key, ImageRecord> done;
  if (options.resume && std::filesystem::exists(manifest_path)) {
    const Manifest previous = load_manifest(root);
    if (!previous.config_digest.empty() && !options.config_digest.empty() &&
        previous.config_digest != options.config_digest) {
      throw ConfigError("cannot resume: manifest in " + root.string() +
                        " was produced under a different configuration");
    }
    for (const auto& r : previous.records) done[key_of(r)] = r;  // later lines win
    for (auto it = done.begin(); it != done.end();) {
      it = file_matches(root, it->second) ? std::next(it) : done.erase(it);
    }
  } else {
    std::filesystem::remove(manifest_path);
    std::filesystem::remove(failures_path);
  }

  GenerationResult result;
  std::vector<Task> pending;
  for (std::size_t b = 0; b < backends.size(); ++b) {
    for (std::size_t c = 0; c < matrix.size(); ++c) {
      for (int i = 0; i < options.n_per_condition; ++i) {
        if (done.contains({backends[b]->id(), matrix[c].id, i})) {
          ++result.skipped;
        } else {
          pending.push_back({b, &matrix[c], c, i});
        }
      }
    }
  }

  {
    json header = {{"format", "objbias-manifest/1"}, {"config_digest", options.config_digest}};
    write_file_atomic(root / manifest_files::kHeader, header.dump(2) + "\n");
  }

  JsonlAppender manifest_out(manifest_path);
  JsonlAppender failures_out(failures_path);
  std::mutex state_mutex;
  std::atomic<bool> abort{false};
  std::exception_ptr fatal;

  const int rounds = options.gap_mode == GapMode::kRetryUntilN ? options.max_rounds : 1;
  for (int round = 1; round <= rounds && !pending.empty() && !abort; ++round) {
    std::vector<std::vector<Task>> per_backend(backends.size());
    for (const auto& t : pending) per_backend[t.backend_index].push_back(t);
    std::vector<Task> failed;

    std::vector<std::jthread> workers;
    std::vector<std::unique_ptr<std::atomic<std::size_t>>> cursors;
    for (std::size_t b = 0; b < backends.size(); ++b) {
      cursors.push_back(std::make_unique<std::atomic<std::size_t>>(0));
      const int n_workers = std::min<int>(options.max_in_flight,
                                          static_cast<int>(per_backend[b].size()));
      for (int w = 0; w < n_workers; ++w) {
        workers.emplace_back([&, b] {
          auto& backend = *backends[b];
          auto& queue = per_backend[b];
          for (;;) {
            if (abort) return;
            const std::size_t idx = cursors[b]->fetch_add(1);
            if (idx >= queue.size()) return;
            const Task& task = queue[idx];
            const auto& cond = *task.condition;
            std::optional<std::int64_t> seed;
            if (backend.supports_seed()) {
              seed = options.base_seed +
                     static_cast<std::int64_t>(task.condition_index) * options.n_per_condition +
                     task.replicate_index;
            }
            FailureRecord failure{backend.id(), cond.id, task.replicate_index, round, "", ""};
            try {
              auto image = backend.generate_image(cond.prompt_text, backend.spec().params, seed);
              ImageRecord rec;
              rec.image_id = image_id_for(backend.id(), cond.object_id, cond.slug(), task.replicate_index);
              rec.backend_id = backend.id();
              rec.condition_id = cond.id;
              rec.replicate_index = task.replicate_index;
              rec.prompt_text = cond.prompt_text;
              rec.file_path = image_path_for(backend.id(), cond.object_id, cond.slug(), task.replicate_index);
              rec.content_hash = sha256_hex(image.png);
              rec.seed = seed;
              rec.created_at = options.reproducible ? std::string(kReproducibleTimestamp) : utc_now_iso8601();
              rec.backend_meta = std::move(image.meta);
              write_file_atomic(root / rec.file_path, image.png);
              manifest_out.append(to_json(rec));
              std::lock_guard lock(state_mutex);
              done[key_of(rec)] = std::move(rec);
              ++result.generated;
              continue;
            } catch (const CredentialError&) {
              std::lock_guard lock(state_mutex);
              if (!fatal) fatal = std::current_exception();
              abort = true;
              return;
            } catch (const ContentPolicyError& e) {
              failure.kind = "content_policy";
              failure.reason = e.what();
            } catch (const TransientError& e) {
              failure.kind = "transient";
              failure.reason = e.what();
            } catch (const std::exception& e) {
              failure.kind = "error";
              failure.reason = e.what();
            }
            failures_out.append(to_json(failure));
            std::lock_guard lock(state_mutex);
            result.failures.push_back(failure);
            failed.push_back(task);
          }
        });
      }
    }
    workers.clear();  // joins
    pending = std::move(failed);
  }

  // Canonical order: backends, then matrix order, then replicate index.
  std::map<std::string, std::size_t> backend_rank, condition_rank;
  for (std::size_t i = 0; i < backends.size(); ++i) backend_rank[backends[i]->id()] = i;
  for (std::size_t i = 0; i < matrix.size(); ++i) condition_rank[matrix[i].id] = i;
  auto rank = [&](const ImageRecord& r) {
    const auto b = backend_rank.find(r.backend_id);
    const auto c = condition_rank.find(r.condition_id);
    return std::make_tuple(b == backend_rank.end() ? backends.size() : b->second, r.backend_id,
                           c == condition_rank.end() ? matrix.size() : c->second, r.condition_id,
                           r.replicate_index);
  };
  result.manifest.config_digest = options.config_digest;
  for (auto& [k, r] : done) result.manifest.records.push_back(r);
  std::sort(result.manifest.records.begin(), result.manifest.records.end(),
            [&](const ImageRecord& a, const ImageRecord& b) { return rank(a) < rank(b); });
  save_manifest(root, result.manifest);

  std::vector<std::string> ids;
  Manifest in_scope;
  for (const auto& b : backends) ids.push_back(b->id());
  for (const auto& r : result.manifest.records) {
    if (backend_rank.contains(r.backend_id)) in_scope.records.push_back(r);
  }
  result.gaps = validate_manifest(in_scope, matrix, ids, options.n_per_condition, root);

  if (fatal) std::rethrow_exception(fatal);
  return result;
}

}  // namespace objbias
