#include "m2trec/cli.hpp"

#include "m2trec/errors.hpp"
#include "m2trec/pipeline.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iomanip>
#include <memory>
#include <optional>
#include <sstream>

namespace m2trec {

namespace {

// JSON-lines logger; every record carries the command and config hash.
class JsonLog {
 public:
  JsonLog(std::ostream& err, std::string command, std::string hash)
      : err_(err), command_(std::move(command)), hash_(std::move(hash)) {}

  void to_file(const std::filesystem::path& path) {
    std::filesystem::create_directories(path.parent_path());
    file_.emplace(path, std::ios::trunc);
    if (!*file_) throw Error("cannot write log " + path.string());
  }

  void operator()(nlohmann::json record) {
    record["command"] = command_;
    record["config_hash"] = hash_;
    const auto line = record.dump();
    err_ << line << '\n';
    if (file_) *file_ << line << '\n' << std::flush;
  }

 private:
  std::ostream& err_;
  std::string command_;
  std::string hash_;
  std::optional<std::ofstream> file_;
};

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

std::vector<Variant> chosen_variants(const RunConfig& config, bool all) {
  if (all) return {std::begin(kAllVariants), std::end(kAllVariants)};
  return {config.variant};
}

int cmd_prepare(const RunConfig& config, std::ostream& out, JsonLog& log) {
  const auto data = prepare_data(config);
  const auto summary = write_prepared(config, data);
  log({{"event", "prepared"}, {"summary", summary}});
  out << summary.dump(2) << '\n';
  return kExitOk;
}

int cmd_train(const RunConfig& config, std::ostream& out, JsonLog& log) {
  const auto data = prepare_data(config);
  log.to_file(train_log_path(config, config.variant));
  try {
    auto trained = train_variant(config, data, config.variant, [&](const nlohmann::json& j) { log(j); });
    const auto path = checkpoint_path(config, config.variant);
    save_trained(trained, path);
    log({{"event", "checkpoint"}, {"path", path.string()}, {"best_epoch", trained.fit.best_epoch},
         {"best_valid_hit", trained.fit.best_valid_hit}});
    out << path.string() << '\n';
  } catch (const DivergenceError&) {
    log({{"event", "aborted"}, {"reason", "divergence"}});
    throw;
  }
  return kExitOk;
}

TrainedModel obtain_model(const RunConfig& config, const PreparedData& data, Variant variant,
                          const std::optional<std::string>& checkpoint, JsonLog& log) {
  const auto path = checkpoint ? std::filesystem::path(*checkpoint) : checkpoint_path(config, variant);
  if (std::filesystem::exists(path)) return load_trained(path);
  if (checkpoint) throw ValidationError("checkpoint not found: " + path.string());
  log({{"event", "training"}, {"variant", to_string(variant)}, {"reason", "no checkpoint"}});
  auto trained = train_variant(config, data, variant, [&](const nlohmann::json& j) { log(j); });
  save_trained(trained, path);
  return trained;
}

std::string fmt(const std::optional<SliceMetrics>& s, bool recall, double SliceMetrics::*field) {
  if (!s) return "-";
  std::ostringstream o;
  o << std::fixed << std::setprecision(4);
  if (recall) {
    if (!s->recall) return "-";
    o << *s->recall;
  } else {
    o << (*s).*field;
  }
  return o.str();
}

int cmd_eval(const RunConfig& config, const std::optional<std::string>& checkpoint, bool variants,
             std::ostream& out, JsonLog& log) {
  if (variants && checkpoint) throw ValidationError("--variants and --checkpoint are exclusive");
  const auto data = prepare_data(config);
  const auto reports = config.output_dir / "reports";
  nlohmann::json grid = nlohmann::json::array();
  std::ostringstream table;
  const std::string ks = "@" + std::to_string(config.eval_k);
  table << std::left << std::setw(12) << "variant" << std::right << std::setw(12) << "params" << std::setw(12)
        << "id_params";
  for (const auto* slice : {"All", "Sparse"}) {
    for (const auto* metric : {"HIT", "Recall", "MRR"}) {
      table << std::setw(18) << (std::string(metric) + ks + "/" + slice);
    }
  }
  table << '\n';
  for (const auto variant : chosen_variants(config, variants)) {
    const auto trained = obtain_model(config, data, variant, checkpoint, log);
    const auto report = evaluate_trained(trained, config, data);
    const auto name = std::string(trained.metadata.value("variant", std::string(to_string(variant))));
    write_file(reports / (name + ".eval.json"), report.to_json().dump(2) + "\n");
    write_file(reports / (name + ".eval.txt"), report.to_table());
    const auto params = trained.model->parameters().scalar_count();
    const auto id_params = item_indexed_scalars(trained.model->parameters());
    log({{"event", "evaluated"}, {"variant", name}, {"report", report.to_json()}});
    if (!variants) {
      out << "variant " << name << " (" << params << " parameters)\n" << report.to_table();
      return kExitOk;
    }
    grid.push_back({{"variant", name}, {"parameters", params}, {"item_indexed_parameters", id_params},
                    {"report", report.to_json()}});
    const auto& item = *report.find(std::string(kItemTask));
    table << std::left << std::setw(12) << name << std::right << std::setw(12) << params << std::setw(12) << id_params;
    for (const auto* s : {&item.all, &item.sparse}) {
      table << std::setw(18) << fmt(*s, false, &SliceMetrics::hit) << std::setw(18) << fmt(*s, true, nullptr)
            << std::setw(18) << fmt(*s, false, &SliceMetrics::mrr);
    }
    table << '\n';
  }
  write_file(reports / "ablation.json", grid.dump(2) + "\n");
  write_file(reports / "ablation.txt", table.str());
  out << table.str();
  return kExitOk;
}

std::vector<std::string> split_items(const std::vector<std::string>& raw) {
  std::vector<std::string> items;
  for (const auto& r : raw) {
    std::stringstream ss(r);
    std::string part;
    while (std::getline(ss, part, ',')) {
      if (!part.empty()) items.push_back(part);
    }
  }
  return items;
}

int cmd_recommend(const std::optional<RunConfig>& given, const std::string& checkpoint,
                  const std::vector<std::string>& raw_items, std::optional<int> k, bool as_json, std::ostream& out) {
  const auto items = split_items(raw_items);
  if (items.empty()) throw ValidationError("recommend needs at least one item");
  const auto trained = load_trained(checkpoint);
  std::filesystem::path catalog_path;
  FeatureSchema schema;
  int top = k.value_or(20);
  if (given) {
    catalog_path = given->catalog_path;
    schema = given->schema;
    if (!k) top = given->eval_k;
  } else {
    const auto stored = parse_run_config(trained.metadata.at("config"), {}, false);
    catalog_path = trained.metadata.value("catalog_path", stored.catalog_path.string());
    schema = stored.schema;
    if (!k) top = stored.eval_k;
  }
  if (top < 1) throw ValidationError("--k must be >= 1");
  const auto catalog = load_catalog(catalog_path, schema.attribute_defs());
  std::vector<EncodedItem> encoded;
  for (const auto& id : items) encoded.push_back(trained.inputs.encode(catalog, id));
  std::vector<const EncodedItem*> prefix;
  for (const auto& e : encoded) prefix.push_back(&e);
  const auto probs = trained.model->predict(prefix);

  nlohmann::json result = {{"session", items}, {"k", top}, {"tasks", nlohmann::json::array()}};
  for (std::size_t t = 0; t < trained.tasks.size(); ++t) {
    nlohmann::json ranked = nlohmann::json::array();
    for (const auto& [label, p] : score_items(probs[t], top, LabelMap::kOther)) {
      ranked.push_back({{"label", trained.labels[t].label(label)}, {"probability", p}});
    }
    result["tasks"].push_back({{"task", trained.tasks[t]}, {"ranked", ranked}});
  }
  if (as_json) {
    out << result.dump(2) << '\n';
    return kExitOk;
  }
  for (const auto& task : result["tasks"]) {
    out << task["task"].get<std::string>() << '\n';
    int rank = 1;
    for (const auto& r : task["ranked"]) {
      out << "  " << std::setw(3) << rank++ << "  " << std::left << std::setw(24) << r["label"].get<std::string>()
          << std::right << std::fixed << std::setprecision(6) << r["probability"].get<double>() << '\n';
    }
  }
  return kExitOk;
}

int cmd_gradcheck(const RunConfig& config, bool variants, std::ostream& out, JsonLog& log) {
  const auto data = prepare_data(config);
  std::vector<int> sizes;
  for (const auto& l : data.labels) sizes.push_back(l.size());
  const auto heads = config.task_heads(sizes);
  TransformerConfig tc = config.transformer;
  tc.dropout = 0.0;
  bool passed = true;
  for (const auto variant : chosen_variants(config, variants)) {
    auto assembly = build_variant(variant_config(variant, config.id_embedding_dim), data.features, data.ids, heads,
                                  tc, config.title_attribute);
    std::vector<std::string> tasks;
    std::vector<LabelMap> labels;
    for (std::size_t t = 0; t < assembly.spec.tasks.size(); ++t) {
      tasks.push_back(assembly.spec.tasks[t].name);
      labels.push_back(data.labels[t]);
    }
    Model<double> model(assembly.spec, config.seed);
    const auto n = std::min<std::size_t>(4, data.train.size());
    const ExampleSet set(assembly.inputs, data.catalog, std::span(data.train).first(n), tasks, labels,
                         data.frequency, config.sparse_mode);
    std::vector<const Example*> batch;
    for (const auto& e : set.examples()) batch.push_back(&e);
    GradCheckOptions options;
    options.seed = config.seed;
    const auto report = gradient_check(model, batch, options);
    passed = passed && report.passed;
    auto j = report.to_json();
    j["variant"] = to_string(variant);
    log({{"event", "gradcheck"}, {"variant", to_string(variant)}, {"passed", report.passed}});
    out << j.dump() << '\n';
  }
  return passed ? kExitOk : kExitRuntime;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Item-ID-free session recommender: prepare, train, eval, recommend, gradcheck", "m2trec"};
  app.require_subcommand(1);
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> checkpoint;
  std::optional<int> k;
  bool variants = false;
  bool as_json = false;
  std::vector<std::string> items;

  auto* prepare = app.add_subcommand("prepare", "ingest, tokenize and write dataset artifacts");
  auto* train = app.add_subcommand("train", "fit the configured variant and write its checkpoint");
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on the test split");
  auto* recommend = app.add_subcommand("recommend", "rank next items and categories for a session");
  auto* gradcheck = app.add_subcommand("gradcheck", "compare analytic and numerical gradients");
  for (auto* sub : {prepare, train, eval, gradcheck}) {
    sub->add_option("--config", config_path, "run config JSON")->required();
    sub->add_option("--seed", seed, "override the config seed");
  }
  eval->add_option("--checkpoint", checkpoint, "checkpoint file (default: the variant's checkpoint)");
  eval->add_flag("--variants", variants, "run the full ablation grid");
  eval->add_option("--k", k, "metric cutoff");
  gradcheck->add_flag("--variants", variants, "check every variant");
  recommend->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  recommend->add_option("--config", config_path, "run config (default: the one stored in the checkpoint)");
  recommend->add_option("--items,items", items, "session items, oldest first (comma separated)")->required();
  recommend->add_option("--k", k, "number of results per task");
  recommend->add_flag("--json", as_json, "print JSON");

  std::vector<std::string> argv_storage{"m2trec"};
  argv_storage.insert(argv_storage.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& a : argv_storage) argv.push_back(a.data());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << e.what() << '\n';
    return kExitValidation;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  auto log = std::make_unique<JsonLog>(err, command, "");
  try {
    if (command == "recommend") {
      std::optional<RunConfig> config;
      if (!config_path.empty()) config = load_run_config(config_path, std::nullopt, false);
      return cmd_recommend(config, *checkpoint, items, k, as_json, out);
    }
    auto config = load_run_config(config_path, seed);
    if (k) {
      if (*k < 1) throw ValidationError("--k must be >= 1");
      config.eval_k = *k;
    }
    log = std::make_unique<JsonLog>(err, command, config.hash);
    (*log)({{"event", "start"}, {"config", config.raw}});
    if (command == "prepare") return cmd_prepare(config, out, *log);
    if (command == "train") return cmd_train(config, out, *log);
    if (command == "eval") return cmd_eval(config, checkpoint, variants, out, *log);
    return cmd_gradcheck(config, variants, out, *log);
  } catch (const ValidationError& e) {
    (*log)({{"event", "error"}, {"kind", "validation"}, {"message", e.what()}});
    return kExitValidation;
  } catch (const ParseError& e) {
    (*log)({{"event", "error"}, {"kind", "validation"}, {"message", e.what()}});
    return kExitValidation;
  } catch (const DuplicateItemError& e) {
    (*log)({{"event", "error"}, {"kind", "validation"}, {"message", e.what()}});
    return kExitValidation;
  } catch (const std::exception& e) {
    (*log)({{"event", "error"}, {"kind", "runtime"}, {"message", e.what()}});
    return kExitRuntime;
  }
}

}  // namespace m2trec
