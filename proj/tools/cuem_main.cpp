// cuem: command-line front end for the multimodal retrieval pipeline.
//
// Subcommands:
//   ask                  run one query through the pipeline, print the result JSON
//   serve                start the HTTP service and block until interrupted
//   eval                 judge candidate answers against baselines, write a report
//   tune                 refine a classification prompt against a labeled table
//   build-relevance-set  harvest classifier training examples from (query, gold) pairs
//   safety-db            import / export / add entries of the unsafe-query database
//
// `ask` exits 0 when the query was answered, 3 when safety blocked it or a
// canned response fired, 1 on any error. Every other subcommand exits 0 on
// success and 1 on any error. Errors and warnings go to stderr; reports and
// results go to stdout (and to --out where offered).

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "cuem/config.hpp"
#include "cuem/evaluation.hpp"
#include "cuem/fixture_env.hpp"
#include "cuem/json_codec.hpp"
#include "cuem/mocks.hpp"
#include "cuem/pipeline.hpp"
#include "cuem/prompt_tuning.hpp"
#include "cuem/relevance.hpp"
#include "cuem/safety.hpp"
#include "cuem/service.hpp"
#include "cuem/templates.hpp"
#include "cuem/types.hpp"

namespace {

using namespace cuem;

void print_warnings(const Warnings& warnings) {
    for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
}

int fail(const Error& e) {
    std::cerr << "error: " << e.message << "\n";
    return 1;
}

int fail(const std::string& message) {
    std::cerr << "error: " << message << "\n";
    return 1;
}

/// Resolves --config (falling back to CUEM_CONFIG) and loads the file.
Result<AppConfig> resolve_config(const std::string& cli_value) {
    std::string path = config_path_or_env(cli_value);
    if (path.empty())
        return make_error<AppConfig>(Errc::invalid_config,
                                     "no config file: pass --config or set CUEM_CONFIG");
    return load_app_config(path);
}

Result<void> emit_report(const Json& report, const std::string& out_path) {
    std::string text = report.dump(2);
    std::cout << text << "\n";
    if (!out_path.empty()) return write_text_file(out_path, text + "\n");
    return {};
}

// ---------------------------------------------------------------------------
// ask

struct AskArgs {
    std::string config;
    std::string query;
    std::string image_id;
    bool no_refiner = false;
    bool no_query_generator = false;
};

int run_ask(const AskArgs& args) {
    auto cfg = resolve_config(args.config);
    if (!cfg.ok()) return fail(cfg.error());

    Warnings warnings;
    auto loaded = load_env(cfg.value(), &warnings);
    print_warnings(warnings);
    if (!loaded.ok()) return fail(loaded.error());

    std::optional<ImageRef> image;
    if (!args.image_id.empty()) {
        auto it = loaded.value().images.find(args.image_id);
        if (it == loaded.value().images.end())
            return fail("unknown image id '" + args.image_id + "' (not in the image fixture)");
        image = it->second;
    }

    auto query = new_query(args.query, image);
    if (!query.ok()) return fail(query.error());

    RunOptions options;
    options.enable_refiner = !args.no_refiner;
    options.enable_query_generator = !args.no_query_generator;

    auto result = run_pipeline(query.value(), cfg.value().pipeline, loaded.value().env, options);
    if (!result.ok()) return fail(result.error());

    std::cout << to_json(result.value()).dump(2) << "\n";
    return result.value().answer.has_value() ? 0 : 3;
}

// ---------------------------------------------------------------------------
// serve

struct ServeArgs {
    std::string config;
    std::string host;  // overrides [service] when set
    int port = -1;     // overrides [service] when >= 0
};

int run_serve(const ServeArgs& args) {
    auto cfg = resolve_config(args.config);
    if (!cfg.ok()) return fail(cfg.error());
    if (!args.host.empty()) cfg.value().service.host = args.host;
    if (args.port >= 0) cfg.value().service.port = args.port;

    Warnings warnings;
    auto service = Service::create(cfg.value(), &warnings);
    print_warnings(warnings);
    if (!service.ok()) return fail(service.error());

    ServiceFront front(std::shared_ptr<Service>(service.take()));
    auto port = front.start(cfg.value().service.host, cfg.value().service.port);
    if (!port.ok()) return fail(port.error());

    std::cerr << "listening on http://" << cfg.value().service.host << ":" << port.value()
              << "\n";
    front.wait();
    return 0;
}

// ---------------------------------------------------------------------------
// eval

struct EvalArgs {
    std::string config;
    std::string cases;  // overrides [paths].eval_cases when set
    std::string out;
    EvalConfig eval;
};

int run_eval(const EvalArgs& args) {
    auto cfg = resolve_config(args.config);
    if (!cfg.ok()) return fail(cfg.error());

    std::string cases_path = args.cases.empty() ? cfg.value().paths.eval_cases : args.cases;
    if (cases_path.empty())
        return fail("no eval cases: pass --cases or set [paths].eval_cases in the config");

    auto cases = load_eval_cases(cases_path);
    if (!cases.ok()) return fail(cases.error());

    Warnings warnings;
    auto loaded = load_env(cfg.value(), &warnings);
    if (!loaded.ok()) {
        print_warnings(warnings);
        return fail(loaded.error());
    }
    if (!loaded.value().env.backends.judge) return fail("no judge backend configured");

    auto report = evaluate_cases(cases.value(), *loaded.value().env.backends.judge, args.eval,
                                 &warnings);
    print_warnings(warnings);
    if (!report.ok()) return fail(report.error());

    auto emitted = emit_report(to_json(report.value()), args.out);
    if (!emitted.ok()) return fail(emitted.error());
    return 0;
}

// ---------------------------------------------------------------------------
// tune
//
// Input file schema (JSON object):
//   template    prompt template object (template_id, version, fixed_sections,
//               instruction_section, example_slots)
//   gold        {input: label} table answered by the lookup generator
//   train       [[input, label], ...] refinement split
//   val         [[input, label], ...] selection split
//   iterations  optional, default 4
//   n_correct / n_incorrect / seed   optional TuneConfig fields

struct TuneArgs {
    std::string data;
    std::string out;
    int iterations = -1;           // overrides the file when >= 0
    std::optional<std::uint64_t> seed;  // overrides the file when set
};

Result<std::vector<LabeledSample>> samples_from_json(const Json& j, const std::string& key) {
    if (!j.contains(key) || !j.at(key).is_array())
        return make_error<std::vector<LabeledSample>>(
            Errc::parse_error, "tune data: missing or non-array '" + key + "'");
    std::vector<LabeledSample> out;
    for (const auto& item : j.at(key)) {
        if (!item.is_array() || item.size() != 2 || !item[0].is_string() || !item[1].is_string())
            return make_error<std::vector<LabeledSample>>(
                Errc::parse_error, "tune data: '" + key + "' entries must be [input, label]");
        out.emplace_back(item[0].get<std::string>(), item[1].get<std::string>());
    }
    return out;
}

int run_tune(const TuneArgs& args) {
    auto text = read_text_file(args.data);
    if (!text.ok()) return fail(text.error());
    auto parsed = parse_json(text.value());
    if (!parsed.ok()) return fail(parsed.error());
    const Json& j = parsed.value();

    if (!j.contains("template"))
        return fail("tune data: missing 'template'");
    auto tpl = prompt_template_from_json(j.at("template"));
    if (!tpl.ok()) return fail(tpl.error());

    if (!j.contains("gold") || !j.at("gold").is_object())
        return fail("tune data: missing or non-object 'gold'");
    std::map<std::string, std::string> gold;
    for (const auto& [input, label] : j.at("gold").items()) {
        if (!label.is_string()) return fail("tune data: gold labels must be strings");
        gold[input] = label.get<std::string>();
    }

    auto train = samples_from_json(j, "train");
    if (!train.ok()) return fail(train.error());
    auto val = samples_from_json(j, "val");
    if (!val.ok()) return fail(val.error());

    int iterations = args.iterations >= 0 ? args.iterations : j.value("iterations", 4);
    TuneConfig tune_cfg;
    tune_cfg.n_correct = j.value("n_correct", tune_cfg.n_correct);
    tune_cfg.n_incorrect = j.value("n_incorrect", tune_cfg.n_incorrect);
    tune_cfg.seed = args.seed ? *args.seed : j.value("seed", std::uint64_t{0});

    SlotLookupGenerator generator(std::move(gold));
    Warnings warnings;
    auto result = tune(tpl.value(), train.value(), val.value(), iterations, tune_cfg, generator,
                       &warnings);
    print_warnings(warnings);
    if (!result.ok()) return fail(result.error());

    const TuneResult& tuned = result.value();
    Json report{{"aborted", tuned.aborted},
                {"best", to_json(tuned.best)},
                {"report", to_json(tuned.report)}};
    if (tuned.abort_error) report["abort_error"] = tuned.abort_error->message;

    auto emitted = emit_report(report, args.out);
    if (!emitted.ok()) return fail(emitted.error());
    if (tuned.aborted) {
        std::cerr << "error: tuning aborted: " << tuned.abort_error->message << "\n";
        return 1;
    }
    return 0;
}

// ---------------------------------------------------------------------------
// build-relevance-set
//
// --pairs is JSON-lines, one {"query": ..., "gold_answer": ...} per line.
// --candidates is a JSON array of documents; it defaults to the corpus
// fixture of the configured environment. Entailment scoring uses the
// configured NLI backend.

struct RelevanceSetArgs {
    std::string config;
    std::string pairs;
    std::string candidates;
    std::string out;
    double pos_thr = 0.9;
    double neg_thr = 0.3;
    int neg_ratio = 4;
    std::uint64_t seed = 0;
};

Result<std::vector<TrainingPair>> load_training_pairs(const std::string& path) {
    auto text = read_text_file(path);
    if (!text.ok()) return make_error<std::vector<TrainingPair>>(text.error().code,
                                                                 text.error().message);
    std::vector<TrainingPair> pairs;
    std::istringstream in(text.value());
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        auto at = [&](const std::string& msg) {
            return make_error<std::vector<TrainingPair>>(
                Errc::parse_error, path + ":" + std::to_string(lineno) + ": " + msg);
        };
        auto j = parse_json(line);
        if (!j.ok()) return at(j.error().message);
        if (!j.value().contains("query") || !j.value().at("query").is_string() ||
            !j.value().contains("gold_answer") || !j.value().at("gold_answer").is_string())
            return at("expected string fields 'query' and 'gold_answer'");
        pairs.push_back({j.value().at("query").get<std::string>(),
                         j.value().at("gold_answer").get<std::string>()});
    }
    return pairs;
}

Result<std::vector<Document>> load_candidate_docs(const std::string& path) {
    auto text = read_text_file(path);
    if (!text.ok()) return make_error<std::vector<Document>>(text.error().code,
                                                             text.error().message);
    auto j = parse_json(text.value());
    if (!j.ok()) return make_error<std::vector<Document>>(j.error().code,
                                                          path + ": " + j.error().message);
    if (!j.value().is_array())
        return make_error<std::vector<Document>>(Errc::parse_error,
                                                 path + ": expected a JSON array of documents");
    std::vector<Document> docs;
    for (const auto& item : j.value()) {
        auto doc = document_from_json(item);
        if (!doc.ok()) return make_error<std::vector<Document>>(doc.error().code,
                                                                path + ": " + doc.error().message);
        docs.push_back(doc.take());
    }
    return docs;
}

int run_build_relevance_set(const RelevanceSetArgs& args) {
    auto cfg = resolve_config(args.config);
    if (!cfg.ok()) return fail(cfg.error());

    std::string candidates_path = args.candidates;
    if (candidates_path.empty() && !cfg.value().paths.fixtures_dir.empty())
        candidates_path =
            (std::filesystem::path(cfg.value().paths.fixtures_dir) / "corpus.json").string();
    if (candidates_path.empty())
        return fail("no candidate documents: pass --candidates or configure a fixtures dir");

    auto pairs = load_training_pairs(args.pairs);
    if (!pairs.ok()) return fail(pairs.error());
    auto candidates = load_candidate_docs(candidates_path);
    if (!candidates.ok()) return fail(candidates.error());

    Warnings warnings;
    auto loaded = load_env(cfg.value(), &warnings);
    if (!loaded.ok()) {
        print_warnings(warnings);
        return fail(loaded.error());
    }
    if (!loaded.value().env.backends.nli) return fail("no NLI backend configured");

    auto examples =
        build_training_set(pairs.value(), candidates.value(), *loaded.value().env.backends.nli,
                           args.pos_thr, args.neg_thr, args.neg_ratio, args.seed, &warnings);
    print_warnings(warnings);
    if (!examples.ok()) return fail(examples.error());

    auto exported = export_training_set(examples.value(), args.out);
    if (!exported.ok()) return fail(exported.error());

    int positives = 0;
    for (const auto& ex : examples.value())
        if (ex.label == RelevanceLabel::positive) ++positives;
    Json report{{"examples", examples.value().size()},
                {"negatives", examples.value().size() - positives},
                {"out", args.out},
                {"positives", positives}};
    std::cout << report.dump(2) << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// safety-db

struct SafetyDbArgs {
    std::string config;
    std::string db;  // overrides [paths].instance_db when set
    std::string in;
    std::string out;
    std::string query;
    std::string response;
    std::string id;
};

/// The database path: --db wins, then the config (which may itself be absent
/// for import/export invocations that pass explicit paths).
Result<std::string> resolve_db_path(const SafetyDbArgs& args) {
    if (!args.db.empty()) return std::string(args.db);
    auto cfg = resolve_config(args.config);
    if (!cfg.ok()) return make_error<std::string>(cfg.error().code, cfg.error().message);
    if (cfg.value().paths.instance_db.empty())
        return make_error<std::string>(Errc::invalid_config,
                                       "no instance db path: pass --db or set "
                                       "[paths].instance_db in the config");
    return cfg.value().paths.instance_db;
}

int run_safety_db_import(const SafetyDbArgs& args) {
    auto db_path = resolve_db_path(args);
    if (!db_path.ok()) return fail(db_path.error());
    auto db = load_instance_db(args.in);
    if (!db.ok()) return fail(db.error());
    auto saved = save_instance_db(db.value(), db_path.value());
    if (!saved.ok()) return fail(saved.error());
    Json report{{"entries", db.value().size()}, {"path", db_path.value()}};
    std::cout << report.dump(2) << "\n";
    return 0;
}

int run_safety_db_export(const SafetyDbArgs& args) {
    auto db_path = resolve_db_path(args);
    if (!db_path.ok()) return fail(db_path.error());
    auto db = load_instance_db(db_path.value());
    if (!db.ok()) return fail(db.error());
    auto saved = save_instance_db(db.value(), args.out);
    if (!saved.ok()) return fail(saved.error());
    Json report{{"entries", db.value().size()}, {"path", args.out}};
    std::cout << report.dump(2) << "\n";
    return 0;
}

int run_safety_db_add(const SafetyDbArgs& args) {
    auto cfg = resolve_config(args.config);
    if (!cfg.ok()) return fail(cfg.error());
    std::string db_path = !args.db.empty() ? args.db : cfg.value().paths.instance_db;
    if (db_path.empty())
        return fail("no instance db path: pass --db or set [paths].instance_db in the config");

    Warnings warnings;
    auto loaded = load_env(cfg.value(), &warnings);
    print_warnings(warnings);
    if (!loaded.ok()) return fail(loaded.error());
    if (!loaded.value().env.backends.embedder) return fail("no embedder backend configured");

    std::vector<InstanceFilterEntry> db;
    if (std::filesystem::exists(db_path)) {
        auto existing = load_instance_db(db_path);
        if (!existing.ok()) return fail(existing.error());
        db = existing.take();
    }

    std::string id =
        args.id.empty() ? "inst-" + digest_of_string(args.query).substr(0, 12) : args.id;
    auto entry = make_instance_entry(id, args.query, args.response,
                                     *loaded.value().env.backends.embedder);
    if (!entry.ok()) return fail(entry.error());

    db.push_back(entry.value());
    auto saved = save_instance_db(db, db_path);
    if (!saved.ok()) return fail(saved.error());

    Json report{{"canned_response", entry.value().canned_response},
                {"entries", db.size()},
                {"id", entry.value().id},
                {"path", db_path},
                {"query_text", entry.value().query_text}};
    std::cout << report.dump(2) << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"multimodal retrieval pipeline"};
    app.require_subcommand(1);

    AskArgs ask_args;
    auto* ask = app.add_subcommand("ask", "run one query through the pipeline");
    ask->add_option("--query", ask_args.query, "query text")->required();
    ask->add_option("--image", ask_args.image_id, "image id from the image fixture");
    ask->add_option("--config", ask_args.config, "config file (or CUEM_CONFIG)");
    ask->add_flag("--no-refiner", ask_args.no_refiner, "use the raw query as the intention");
    ask->add_flag("--no-query-generator", ask_args.no_query_generator,
                  "skip supplementary query generation");

    ServeArgs serve_args;
    auto* serve = app.add_subcommand("serve", "start the HTTP service");
    serve->add_option("--config", serve_args.config, "config file (or CUEM_CONFIG)");
    serve->add_option("--host", serve_args.host, "bind host (overrides [service].host)");
    serve->add_option("--port", serve_args.port, "bind port (overrides [service].port)");

    EvalArgs eval_args;
    auto* eval = app.add_subcommand("eval", "judge candidates against baselines");
    eval->add_option("--config", eval_args.config, "config file (or CUEM_CONFIG)");
    eval->add_option("--cases", eval_args.cases, "eval cases JSONL (default: config)");
    eval->add_option("--out", eval_args.out, "write the report JSON here too");
    eval->add_option("--fraction", eval_args.eval.subsample_fraction,
                     "subsample fraction for the error estimate");
    eval->add_option("--seed", eval_args.eval.seed, "resampling seed");
    eval->add_option("--resamples", eval_args.eval.n_resamples, "number of resamples");

    TuneArgs tune_args;
    std::uint64_t tune_seed = 0;
    auto* tune_cmd = app.add_subcommand("tune", "refine a classification prompt");
    tune_cmd->add_option("--data", tune_args.data, "tuning data JSON file")->required();
    tune_cmd->add_option("--out", tune_args.out, "write the report JSON here too");
    tune_cmd->add_option("--iterations", tune_args.iterations, "refinement iterations");
    auto* seed_opt = tune_cmd->add_option("--seed", tune_seed, "sampling seed");

    RelevanceSetArgs rel_args;
    auto* rel = app.add_subcommand("build-relevance-set",
                                   "harvest relevance training examples");
    rel->add_option("--config", rel_args.config, "config file (or CUEM_CONFIG)");
    rel->add_option("--pairs", rel_args.pairs, "(query, gold_answer) JSONL")->required();
    rel->add_option("--candidates", rel_args.candidates,
                    "candidate documents JSON array (default: corpus fixture)");
    rel->add_option("--out", rel_args.out, "training set JSONL output")->required();
    rel->add_option("--pos-thr", rel_args.pos_thr, "positive entailment threshold");
    rel->add_option("--neg-thr", rel_args.neg_thr, "negative entailment threshold");
    rel->add_option("--neg-ratio", rel_args.neg_ratio, "negatives per positive");
    rel->add_option("--seed", rel_args.seed, "negative sampling seed");

    SafetyDbArgs db_args;
    auto* db = app.add_subcommand("safety-db", "manage the unsafe-query database");
    db->require_subcommand(1);
    auto* db_import = db->add_subcommand("import", "replace the database from a JSONL file");
    db_import->add_option("--in", db_args.in, "JSONL file to import")->required();
    db_import->add_option("--config", db_args.config, "config file (or CUEM_CONFIG)");
    db_import->add_option("--db", db_args.db, "database path (overrides the config)");
    auto* db_export = db->add_subcommand("export", "write the database to a JSONL file");
    db_export->add_option("--out", db_args.out, "JSONL file to write")->required();
    db_export->add_option("--config", db_args.config, "config file (or CUEM_CONFIG)");
    db_export->add_option("--db", db_args.db, "database path (overrides the config)");
    auto* db_add = db->add_subcommand("add", "embed and append one entry");
    db_add->add_option("--query", db_args.query, "query text to match")->required();
    db_add->add_option("--response", db_args.response, "canned response to serve")->required();
    db_add->add_option("--id", db_args.id, "entry id (default: derived from the query)");
    db_add->add_option("--config", db_args.config, "config file (or CUEM_CONFIG)");
    db_add->add_option("--db", db_args.db, "database path (overrides the config)");

    CLI11_PARSE(app, argc, argv);

    if (*ask) return run_ask(ask_args);
    if (*serve) return run_serve(serve_args);
    if (*eval) return run_eval(eval_args);
    if (*tune_cmd) {
        if (*seed_opt) tune_args.seed = tune_seed;
        return run_tune(tune_args);
    }
    if (*rel) return run_build_relevance_set(rel_args);
    if (*db) {
        if (*db_import) return run_safety_db_import(db_args);
        if (*db_export) return run_safety_db_export(db_args);
        if (*db_add) return run_safety_db_add(db_args);
    }
    return fail("no subcommand");
}
