#include "nl2flow/cli.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include <fmt/format.h>

#include "json_io.hpp"
#include "nl2flow/eval.hpp"
#include "nl2flow/pipeline.hpp"
#include "text_util.hpp"

namespace nl2flow {

namespace {

/// Flags shared by the commands that build a full pipeline.
struct ResourceFlags {
  PipelineConfig config = PipelineConfig::defaults();
  std::string family;
  std::string strategy = "cag";
  std::string classifier_url;
  std::string mock_scripts;
  std::string registry;
};

void add_resource_flags(CLI::App& cmd, ResourceFlags& f) {
  auto& c = f.config;
  const char* env_family = std::getenv("LLM_FAMILY");
  f.family = env_family && *env_family ? env_family : "granite";
  f.registry = c.registry.string();
  cmd.add_option("--strategy", f.strategy, "Stage prediction strategy: cag, single or agentic")
      ->check(CLI::IsMember({"cag", "single", "agentic"}))
      ->capture_default_str();
  cmd.add_option("--catalog", c.catalog, "Stage catalog document")->check(CLI::ExistingFile)->capture_default_str();
  cmd.add_option("--examples", c.examples, "Few-shot example bank")->check(CLI::ExistingFile)->capture_default_str();
  cmd.add_option("--decomp-examples", c.decomposition_examples, "Decomposition few-shot examples")
      ->check(CLI::ExistingFile)
      ->capture_default_str();
  auto* classifier = cmd.add_option("--classifier", c.classifier, "Classifier training pairs (JSON or TSV)")
                         ->check(CLI::ExistingFile)
                         ->capture_default_str();
  cmd.add_option("--classifier-url", f.classifier_url, "Use a classifier service at this base URL instead")
      ->excludes(classifier);
  cmd.add_option("--threshold", c.classifier_threshold, "Classifier match threshold")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  cmd.add_option("--registry", f.registry, "External registry of connections, schemas and tables")
      ->capture_default_str();
  cmd.add_option("--templates", c.templates, "Prompt template directory")->check(CLI::ExistingDirectory)->capture_default_str();
  cmd.add_option("--family", f.family, "Prompt family: granite or llama (default from LLM_FAMILY)")
      ->check(CLI::IsMember({"granite", "llama"}))
      ->capture_default_str();
  cmd.add_option("--mock-scripts", f.mock_scripts, "Answer LLM calls from this mock script file")
      ->check(CLI::ExistingFile);
  cmd.add_option("--parallel", c.parallel, "Concurrent LLM requests")->check(CLI::Range(1, 64))->capture_default_str();
  cmd.add_option("--example-cap", c.example_cap, "Maximum few-shot examples in a scoped prompt")
      ->check(CLI::Range(1, 10000))
      ->capture_default_str();
  cmd.add_flag("--full-prompts", c.full_prompts, "Keep full prompt text in the trace");
  cmd.add_flag("--dependency-fixpoint", c.dependency_fixpoint,
               "Repeat property dependency checks until nothing more is rejected");
}

PipelineConfig finish_config(ResourceFlags& f) {
  auto c = f.config;
  c.strategy = parse_strategy(f.strategy);
  c.family = parse_family(f.family);
  c.registry = f.registry;
  if (!f.classifier_url.empty()) c.classifier_url = f.classifier_url;
  if (!f.mock_scripts.empty()) {
    c.mock_scripts = f.mock_scripts;
  } else {
    c.http = HttpProviderConfig::from_env();
    if (!c.http) throw Error("no LLM configured: pass --mock-scripts or set LLM_ENDPOINT");
  }
  return c;
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ParseError(path, "cannot write file");
  f << text;
  if (!f) throw ParseError(path, "write failed");
}

struct GenerateFlags {
  std::string utterance;
  bool from_stdin = false;
  std::string out_path;
  std::string dot_path;
  bool trace = false;
};

int cmd_generate(ResourceFlags& rf, const GenerateFlags& g, std::ostream& out, std::ostream& err, std::istream& in) {
  std::string utterance = g.utterance;
  if (g.from_stdin) {
    std::ostringstream buf;
    buf << in.rdbuf();
    utterance = buf.str();
  }
  utterance = std::string(detail::trim(utterance));
  if (utterance.empty()) throw Error("the utterance is empty");

  const auto res = Resources::load(finish_config(rf));
  Workflow w;
  try {
    w = generate(utterance, *res);
  } catch (const PipelineError& e) {
    err << "error: pipeline failed at " << e.step() << ": " << e.message() << "\n";
    out << emit_diagnostics(e, g.trace);
    return kExitPipelineError;
  }
  const auto doc = emit_workflow(w, g.trace);
  if (g.out_path.empty()) {
    out << doc;
  } else {
    write_file(g.out_path, doc);
  }
  if (!g.dot_path.empty()) write_file(g.dot_path, emit_dot(w));
  for (const auto& d : w.diagnostics) err << "warning: " << d.step << ": " << d.message << "\n";
  return kExitOk;
}

struct EvalFlags {
  std::string dataset = (std::filesystem::path(NL2FLOW_DATA_DIR) / "datasets" / "eval20.json").string();
  std::string measure = "stages";
  std::string report_path;
  std::string strategies = "cag,single";
};

int cmd_eval(ResourceFlags& rf, const EvalFlags& e, std::ostream& out) {
  EvalOptions options;
  options.measures = parse_measures(e.measure);
  options.strategies.clear();
  const std::string_view list = e.strategies;
  std::size_t start = 0;
  while (start <= list.size()) {
    auto comma = list.find(',', start);
    if (comma == std::string_view::npos) comma = list.size();
    const auto item = detail::trim(list.substr(start, comma - start));
    if (!item.empty()) options.strategies.push_back(parse_strategy(item));
    start = comma + 1;
  }
  if (options.strategies.empty()) throw Error("no strategy given");

  auto config = finish_config(rf);
  options.parallel = config.parallel;
  const auto res = Resources::load(config);
  const auto records = load_dataset(e.dataset, &res->catalog);
  const auto report = run_eval(records, *res, options);
  if (!e.report_path.empty()) write_file(e.report_path, emit_report(report));
  out << format_report_table(report);
  return kExitOk;
}

struct ClassifyFlags {
  std::string text;
  std::filesystem::path training = PipelineConfig::defaults().classifier;
  std::filesystem::path catalog = PipelineConfig::defaults().catalog;
  std::string url;
  double threshold = ClassifierModel::kDefaultThreshold;
  int top = 5;
};

int cmd_classify(const ClassifyFlags& f, std::ostream& out) {
  std::unique_ptr<Classifier> classifier;
  if (!f.url.empty()) {
    classifier = std::make_unique<RemoteClassifier>(f.url);
  } else {
    const auto catalog = load_catalog(f.catalog);
    classifier = std::make_unique<LexicalClassifier>(train(load_training_pairs(f.training), &catalog, f.threshold));
  }
  const auto c = classifier->classify(f.text);
  out << "top: " << (c.top() ? *c.top() : std::string("no match")) << "\n";
  const auto n = std::min<std::size_t>(c.ranked.size(), static_cast<std::size_t>(f.top));
  for (std::size_t i = 0; i < n; ++i) {
    out << fmt::format("{:>3}. {:<32} {:.4f}\n", i + 1, c.ranked[i].label, c.ranked[i].score);
  }
  return kExitOk;
}

int cmd_catalog_validate(const std::filesystem::path& path, std::ostream& out, std::ostream& err) {
  try {
    const auto catalog = load_catalog(path);
    std::size_t connectors = 0;
    for (const auto& s : catalog.stages()) connectors += s.is_connector;
    out << fmt::format("ok: {} stages ({} connectors, {} transforms)\n", catalog.size(), connectors,
                       catalog.size() - connectors);
    return kExitOk;
  } catch (const ValidationError& e) {
    err << fmt::format("{}: {} violation(s)\n", path.string(), e.problems().size());
    for (const auto& p : e.problems()) err << "  " << p << "\n";
    return kExitUserError;
  }
}

int cmd_export(const std::filesystem::path& workflow, const std::string& out_path, std::ostream& out) {
  const auto g = graph_from_workflow_json(detail::load_json_file(workflow), workflow.string());
  const auto dot = to_dot(g);
  if (out_path.empty()) {
    out << dot;
  } else {
    write_file(out_path, dot);
  }
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err, std::istream& in) {
  CLI::App app{"Compile natural-language ETL descriptions into workflow graphs.", "nl2flow"};
  app.require_subcommand(1);
  app.footer("Exit codes: 0 success, 1 bad input or flags, 2 pipeline failure.\n"
             "Without --mock-scripts, LLM_ENDPOINT, LLM_API_KEY and LLM_MODEL select an HTTP provider.");

  ResourceFlags gen_rf, eval_rf;
  GenerateFlags gen;
  auto* generate_cmd = app.add_subcommand("generate", "Generate a workflow for one utterance");
  auto* utt = generate_cmd->add_option("--utterance", gen.utterance, "Flow description");
  auto* from_stdin = generate_cmd->add_flag("--stdin", gen.from_stdin, "Read the flow description from standard input");
  utt->excludes(from_stdin);
  generate_cmd->add_option("--out", gen.out_path, "Write the workflow document here instead of standard output");
  generate_cmd->add_option("--dot", gen.dot_path, "Also write the graph in DOT format here");
  generate_cmd->add_flag("--trace", gen.trace, "Include the provenance block");
  add_resource_flags(*generate_cmd, gen_rf);

  EvalFlags ev;
  auto* eval_cmd = app.add_subcommand("eval", "Score strategies against a labelled dataset");
  eval_cmd->add_option("--dataset", ev.dataset, "Evaluation dataset")->check(CLI::ExistingFile)->capture_default_str();
  eval_cmd->add_option("--measure", ev.measure, "Comma-separated measures: stages, edges, props")->capture_default_str();
  eval_cmd->add_option("--report", ev.report_path, "Write the JSON report here");
  eval_cmd->add_option("--strategies", ev.strategies, "Comma-separated strategies to score; the first also drives edges and props")
      ->capture_default_str();
  add_resource_flags(*eval_cmd, eval_rf);

  ClassifyFlags cl;
  auto* classify_cmd = app.add_subcommand("classify", "Show classifier labels for a text");
  classify_cmd->add_option("--text", cl.text, "Text to classify")->required();
  auto* training = classify_cmd->add_option("--classifier", cl.training, "Classifier training pairs (JSON or TSV)")
                       ->check(CLI::ExistingFile)
                       ->capture_default_str();
  classify_cmd->add_option("--catalog", cl.catalog, "Catalog the labels must belong to")
      ->check(CLI::ExistingFile)
      ->capture_default_str();
  classify_cmd->add_option("--classifier-url", cl.url, "Query a classifier service at this base URL instead")
      ->excludes(training);
  classify_cmd->add_option("--threshold", cl.threshold, "Match threshold")->check(CLI::Range(0.0, 1.0))->capture_default_str();
  classify_cmd->add_option("--top", cl.top, "Number of ranked labels to print")->check(CLI::Range(1, 1000))->capture_default_str();

  std::filesystem::path validate_path;
  auto* validate_cmd = app.add_subcommand("catalog-validate", "Check a catalog document");
  validate_cmd->add_option("--catalog", validate_path, "Catalog document")->required()->check(CLI::ExistingFile);

  std::filesystem::path workflow_path;
  std::string export_format = "dot";
  std::string export_out;
  auto* export_cmd = app.add_subcommand("export", "Convert a workflow document");
  export_cmd->add_option("--workflow", workflow_path, "Workflow document")->required()->check(CLI::ExistingFile);
  export_cmd->add_option("--format", export_format, "Output format")
      ->check(CLI::IsMember({"dot"}))
      ->capture_default_str();
  export_cmd->add_option("--out", export_out, "Write here instead of standard output");

  try {
    app.parse(argc, argv);
    if (generate_cmd->parsed() && gen.utterance.empty() && !gen.from_stdin) {
      throw CLI::RequiredError("--utterance or --stdin");
    }
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUserError;
  }

  try {
    if (generate_cmd->parsed()) return cmd_generate(gen_rf, gen, out, err, in);
    if (eval_cmd->parsed()) return cmd_eval(eval_rf, ev, out);
    if (classify_cmd->parsed()) return cmd_classify(cl, out);
    if (validate_cmd->parsed()) return cmd_catalog_validate(validate_path, out, err);
    if (export_cmd->parsed()) return cmd_export(workflow_path, export_out, out);
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUserError;
  } catch (const LlmError& e) {
    err << "error: " << e.what() << "\n";
    return kExitPipelineError;
  } catch (const ProtocolError& e) {
    err << "error: " << e.what() << "\n";
    return kExitPipelineError;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitUserError;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return kExitPipelineError;
  }
  return kExitUserError;
}

}  // namespace nl2flow
