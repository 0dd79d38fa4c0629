#include "cli.hpp"

#include <CLI11.hpp>

#include <atomic>
#include <chrono>
#include <csignal>
#include <ostream>
#include <thread>

#include "objbias/analysis.hpp"
#include "objbias/backends.hpp"
#include "objbias/config.hpp"
#include "objbias/discovery.hpp"
#include "objbias/errors.hpp"
#include "objbias/extraction.hpp"
#include "objbias/generation.hpp"
#include "objbias/prompt_matrix.hpp"
#include "objbias/report.hpp"
#include "objbias/review_server.hpp"
#include "objbias/util.hpp"
#include "objbias/validation.hpp"

namespace objbias::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::atomic<bool> g_interrupted{false};

extern "C" void on_signal(int) { g_interrupted = true; }

struct Flags {
  std::string config_path;
  std::string out;
  std::optional<std::int64_t> seed;
  std::vector<std::string> backends;
  bool mock = false;
  bool reproducible = false;
  bool fresh = false;
  // serve
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string static_dir;
  // report / validate
  std::string report_dir;
  int per_condition = -1;
};

struct Context {
  AuditConfig config;
  std::string digest;
  fs::path root;
  std::vector<std::string> backend_ids;
  Flags flags;
};

Context make_context(const Flags& flags) {
  Context ctx;
  ctx.flags = flags;
  if (flags.config_path.empty()) {
    ctx.config = default_config();
  } else {
    ctx.config = load_config(flags.config_path);
    auto& fixture = ctx.config.vlm.mock_fixture;
    if (!fixture.empty() && fs::path(fixture).is_relative()) {
      fixture = (fs::path(flags.config_path).parent_path() / fixture).lexically_normal().string();
    }
  }
  if (flags.seed) {
    auto& s = ctx.config.seeds;
    s.generation = s.discovery = s.extraction = s.permutation = s.validation = *flags.seed;
  }
  if (flags.mock) {
    for (auto& b : ctx.config.backends) b.kind = BackendKind::kMock;
    if (ctx.config.vlm.kind != BackendKind::kMock) {
      ctx.config.vlm.kind = BackendKind::kMock;
      ctx.config.vlm.model_id = "mock-vlm";
    }
  }
  if (!flags.out.empty()) ctx.config.output_root = flags.out;
  validate_config(ctx.config);
  ctx.digest = config_digest(ctx.config);
  ctx.root = ctx.config.output_root;

  if (flags.backends.empty()) {
    for (const auto& b : ctx.config.backends) ctx.backend_ids.push_back(b.id);
  } else {
    for (const auto& id : flags.backends) {
      if (ctx.config.find_backend(id) == nullptr) throw ConfigError("unknown backend '" + id + "'");
      ctx.backend_ids.push_back(id);
    }
  }
  return ctx;
}

int cmd_plan(const Context& ctx, std::ostream& out) {
  const auto matrix = build_matrix(ctx.config);
  for (const auto& c : matrix) out << c.id << '\t' << c.prompt_text << '\n';
  out << matrix.size() << " conditions x " << ctx.backend_ids.size() << " backends x "
      << ctx.config.n_per_condition << " images = "
      << matrix.size() * ctx.backend_ids.size() * static_cast<std::size_t>(ctx.config.n_per_condition)
      << " images\n";
  return kExitOk;
}

int cmd_generate(const Context& ctx, std::ostream& out) {
  const auto matrix = build_matrix(ctx.config);
  std::vector<std::shared_ptr<ImageBackend>> backends;
  for (const auto& id : ctx.backend_ids) {
    backends.push_back(make_backend(*ctx.config.find_backend(id), ctx.config.rate_limits));
  }
  GenerationOptions opts;
  opts.root = ctx.root;
  opts.n_per_condition = ctx.config.n_per_condition;
  opts.resume = !ctx.flags.fresh;
  opts.gap_mode = ctx.config.gap_mode;
  opts.max_rounds = ctx.config.max_rounds;
  opts.max_in_flight = ctx.config.rate_limits.max_in_flight;
  opts.base_seed = ctx.config.seeds.generation;
  opts.reproducible = ctx.flags.reproducible;
  opts.config_digest = ctx.digest;
  const auto result = generate_corpus(matrix, backends, opts);

  json report = {{"generated", result.generated},
                 {"skipped", result.skipped},
                 {"failures", result.failures.size()},
                 {"gaps", to_json(result.gaps)}};
  write_file_atomic(ctx.root / "generation_report.json", report.dump(2) + "\n");
  out << "generated " << result.generated << ", kept " << result.skipped << ", failed attempts "
      << result.failures.size() << ", manifest " << result.manifest.records.size() << " records\n";
  if (!result.gaps.empty()) {
    out << "corpus incomplete: " << result.gaps.missing.size() << " missing, "
        << result.gaps.hash_mismatches.size() << " hash mismatches (see generation_report.json)\n";
    return ctx.config.gap_mode == GapMode::kAcceptGaps ? kExitOk : kExitValidation;
  }
  return kExitOk;
}

Manifest require_manifest(const fs::path& root) {
  if (!fs::exists(root / manifest_files::kRecords)) {
    throw MissingArtifactError((root / manifest_files::kRecords).string() + " (run 'generate' first)");
  }
  return load_manifest(root);
}

int cmd_discover(const Context& ctx, std::ostream& out) {
  const auto manifest = require_manifest(ctx.root);
  const auto matrix = build_matrix(ctx.config);
  auto client = make_vlm_client(ctx.config.vlm, ctx.config.rate_limits, ctx.config.seeds.discovery);
  client->check_credentials();
  for (const auto& backend : ctx.backend_ids) {
    for (const auto& object : ctx.config.objects) {
      const auto path = artifact_paths::taxonomy(ctx.root, backend, object.id);
      if (!ctx.flags.fresh && fs::exists(path)) {
        out << "taxonomy " << backend << "/" << object.id << " exists, kept\n";
        continue;
      }
      const auto sample = select_discovery_sample(manifest, matrix, backend, object.id, ctx.config.seeds.discovery);
      const auto result =
          discover_attributes(sample, *client, backend, object, ctx.root, ctx.config.vlm.max_reprompts);
      validate_taxonomy(result.taxonomy);
      json sample_ids = json::array();
      for (const auto& r : sample) sample_ids.push_back(r.image_id);
      std::vector<json> log;
      for (std::size_t i = 0; i < result.responses.size(); ++i) {
        log.push_back({{"attempt", i + 1},
                       {"prompt_digest", sha256_hex(result.prompt)},
                       {"model_id", client->model_id()},
                       {"sample", sample_ids},
                       {"response", result.responses[i]}});
      }
      write_jsonl(artifact_paths::discovery_log(ctx.root, backend, object.id), log);
      save_taxonomy(path, result.taxonomy);
      out << "taxonomy " << backend << "/" << object.id << ": " << result.taxonomy.attributes.size()
          << " attributes\n";
    }
  }
  return kExitOk;
}

int cmd_extract(const Context& ctx, std::ostream& out) {
  const auto manifest = require_manifest(ctx.root);
  auto client = make_vlm_client(ctx.config.vlm, ctx.config.rate_limits, ctx.config.seeds.extraction);
  client->check_credentials();
  const auto cache_path = ctx.root / "cache" / "extraction.jsonl";
  if (ctx.flags.fresh) fs::remove(cache_path);
  fs::create_directories(cache_path.parent_path());
  ExtractionCache cache(cache_path);
  Extractor extractor(*client, cache, ctx.config.vlm.max_reprompts);
  for (const auto& backend : ctx.backend_ids) {
    for (const auto& object : ctx.config.objects) {
      const auto tpath = artifact_paths::taxonomy(ctx.root, backend, object.id);
      if (!fs::exists(tpath)) throw MissingArtifactError(tpath.string() + " (run 'discover' first)");
      const auto taxonomy = load_taxonomy(tpath);
      std::vector<ImageRecord> images;
      for (const auto& r : manifest.records) {
        if (r.backend_id == backend && object_of_condition(r.condition_id) == object.id) images.push_back(r);
      }
      const auto records = extractor.extract_all(images, taxonomy, object.phrase, ctx.root,
                                                 ctx.config.rate_limits.max_in_flight);
      std::size_t flagged = 0;
      for (const auto& r : records) flagged += r.flagged() ? 1 : 0;
      save_attribute_records(artifact_paths::attributes(ctx.root, backend, object.id), records);
      out << "attributes " << backend << "/" << object.id << ": " << records.size() << " images, " << flagged
          << " flagged\n";
    }
  }
  return kExitOk;
}

int cmd_analyze(const Context& ctx, std::ostream& out) {
  require_manifest(ctx.root);
  const auto report = run_analysis(ctx.root, ctx.config, ctx.backend_ids, AnalysisOptions::from_config(ctx.config));
  save_bias_report(bias_report_path(ctx.root), report);
  std::size_t significant = 0;
  for (const auto& b : report.bds) significant += b.significant ? 1 : 0;
  out << "bds cells " << report.bds.size() << " (" << significant << " significant at alpha "
      << format3(report.alpha) << "), cds " << report.cds.size() << ", vac " << report.vac.size()
      << ", segregation " << report.segregation.size() << ", shifts " << report.shifts.size() << "\n"
      << "wrote " << bias_report_path(ctx.root).string() << "\n";
  return kExitOk;
}

int cmd_report(const Context& ctx, std::ostream& out) {
  const auto path = bias_report_path(ctx.root);
  if (!fs::exists(path)) throw MissingArtifactError(path.string() + " (run 'analyze' first)");
  const auto report = load_bias_report(path);
  ReportSpec spec;
  spec.alpha = ctx.config.alpha;
  spec.cds_top_k = static_cast<std::size_t>(ctx.config.cds_top_k);
  const fs::path dir = ctx.flags.report_dir.empty() ? ctx.root / "report" : fs::path(ctx.flags.report_dir);
  for (const auto& p : write_report(dir, report, spec)) out << "wrote " << p.string() << "\n";
  return kExitOk;
}

int cmd_validate_sample(const Context& ctx, std::ostream& out) {
  const auto manifest = require_manifest(ctx.root);
  Manifest scoped;
  for (const auto& r : manifest.records) {
    if (std::find(ctx.backend_ids.begin(), ctx.backend_ids.end(), r.backend_id) != ctx.backend_ids.end()) {
      scoped.records.push_back(r);
    }
  }
  const int per = ctx.flags.per_condition >= 0 ? ctx.flags.per_condition : ctx.config.validation_per_condition;
  const auto sample = stratified_sample(scoped, per, ctx.config.seeds.validation);
  json ids = json::array();
  for (const auto& r : sample) ids.push_back(r.image_id);
  const auto path = ctx.root / "validation" / "sample.json";
  write_file_atomic(path, json{{"seed", ctx.config.seeds.validation}, {"per_condition", per}, {"image_ids", ids}}
                              .dump(2) + "\n");
  out << "sampled " << sample.size() << " images -> " << path.string() << "\n";
  return kExitOk;
}

int cmd_validate_agreement(const Context& ctx, std::ostream& out) {
  const auto manifest = require_manifest(ctx.root);
  const auto apath = ctx.root / kAnnotationsFile;
  if (!fs::exists(apath)) throw MissingArtifactError(apath.string() + " (record annotations with 'serve')");
  std::vector<AttributeRecord> records;
  for (const auto& backend : ctx.backend_ids) {
    for (const auto& object : ctx.config.objects) {
      const auto path = artifact_paths::attributes(ctx.root, backend, object.id);
      if (!fs::exists(path)) throw MissingArtifactError(path.string() + " (run 'extract' first)");
      auto recs = load_attribute_records(path);
      records.insert(records.end(), recs.begin(), recs.end());
    }
  }
  const auto stats = compute_agreement(load_annotations(apath), records, &manifest);
  write_file_atomic(ctx.root / "validation" / "agreement.json", to_json(stats).dump(2) + "\n");
  write_file_atomic(ctx.root / "validation" / "agreement.csv", agreement_csv(stats));
  char rate[32];
  std::snprintf(rate, sizeof rate, "%.4f", stats.agreement_rate());
  out << "agreement " << stats.appropriate << "/" << stats.total << " = " << rate << " (incorrect "
      << stats.incorrect << ", ambiguous " << stats.ambiguous << ")\n";
  return kExitOk;
}

int cmd_serve(const Context& ctx, std::ostream& out) {
  require_manifest(ctx.root);
  ReviewServer server(ctx.root, ctx.config);
  if (!ctx.flags.static_dir.empty()) server.set_static_dir(ctx.flags.static_dir);
  const int port = server.start(ctx.flags.host, ctx.flags.port);
  out << "serving " << ctx.root.string() << " on http://" << ctx.flags.host << ":" << port << "\n" << std::flush;
  g_interrupted = false;
  auto previous_int = std::signal(SIGINT, on_signal);
  auto previous_term = std::signal(SIGTERM, on_signal);
  while (!g_interrupted) std::this_thread::sleep_for(std::chrono::milliseconds(100));
  server.stop();
  server.wait();
  std::signal(SIGINT, previous_int);
  std::signal(SIGTERM, previous_term);
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Audit text-to-image models for demographic bias in generated objects", "objbias"};
  app.fallthrough(true);
  app.require_subcommand(1);
  Flags flags;
  app.add_option("--config", flags.config_path, "Audit config (JSON); defaults reproduce the reference design")
      ->check(CLI::ExistingFile);
  app.add_option("--out", flags.out, "Output root (overrides output_root)");
  app.add_option("--seed", flags.seed, "Override every stage seed");
  app.add_option("--backend", flags.backends, "Restrict to these backend ids");
  app.add_flag("--mock", flags.mock, "Replace every remote backend and the VLM with offline mocks");
  app.add_flag("--reproducible", flags.reproducible, "Write fixed timestamps so reruns are byte-identical");
  app.add_flag("--fresh", flags.fresh, "Discard earlier stage outputs instead of resuming");

  auto* plan = app.add_subcommand("plan", "Print the prompt matrix");
  auto* generate = app.add_subcommand("generate", "Generate the image corpus");
  auto* discover = app.add_subcommand("discover", "Propose per backend-object attribute taxonomies");
  auto* extract = app.add_subcommand("extract", "Classify every image against its taxonomy");
  auto* analyze = app.add_subcommand("analyze", "Compute BDS, CDS, VAC, p-values, segregation and shifts");
  auto* report = app.add_subcommand("report", "Render HTML, JSON and CSV tables");
  report->add_option("--report-dir", flags.report_dir, "Output directory (default <out>/report)");
  auto* validate = app.add_subcommand("validate", "Human validation");
  validate->require_subcommand(1);
  auto* sample = validate->add_subcommand("sample", "Draw the stratified validation sample");
  sample->add_option("--per", flags.per_condition, "Images per (backend, condition) cell");
  auto* agreement = validate->add_subcommand("agreement", "Agreement between annotations and extracted values");
  auto* serve = app.add_subcommand("serve", "Serve the review API");
  serve->add_option("--host", flags.host, "Bind address");
  serve->add_option("--port", flags.port, "Port (0 picks a free one)");
  serve->add_option("--static", flags.static_dir, "Directory of built review UI assets");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitConfig;
  }

  try {
    const Context ctx = make_context(flags);
    if (*plan) return cmd_plan(ctx, out);
    if (*generate) return cmd_generate(ctx, out);
    if (*discover) return cmd_discover(ctx, out);
    if (*extract) return cmd_extract(ctx, out);
    if (*analyze) return cmd_analyze(ctx, out);
    if (*report) return cmd_report(ctx, out);
    if (*sample) return cmd_validate_sample(ctx, out);
    if (*agreement) return cmd_validate_agreement(ctx, out);
    if (*serve) return cmd_serve(ctx, out);
    err << "error: no subcommand\n";
    return kExitConfig;
  } catch (const MissingArtifactError& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const CredentialError& e) {
    err << "credential error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const ResponseFormatError& e) {
    err << "validation error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const ValidationError& e) {
    err << "validation error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  }
}

}  // namespace objbias::cli
