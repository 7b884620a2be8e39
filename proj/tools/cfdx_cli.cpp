#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <httplib.h>
#include <json.hpp>

#include "cfdx.hpp"
#include "cfdx/service.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Options {
  std::string data, schema, model, out = ".";
  std::uint64_t seed = 0;
  std::size_t k = 5;
  double lambda1 = 0.5, lambda2 = 1.0;
  std::string scenario = "baseline";
  std::string record, target, from, to, feature, cls;
  std::size_t runs = 5, top = 3;
  int port = 8080;
  std::string host = "127.0.0.1";
  bool synthetic = false;
  std::optional<double> bandwidth;
};

cfdx::FeatureSchema schema_of(const Options& o) {
  return o.schema.empty() ? cfdx::canonical_schema() : cfdx::load_schema(o.schema);
}

cfdx::Dataset data_of(const Options& o, const cfdx::FeatureSchema& schema) {
  if (o.data.empty()) cfdx::fail(cfdx::ErrorCode::InvalidArgument, "--data is required");
  std::vector<std::string> warnings;
  auto d = cfdx::load_dataset(o.data, schema, &warnings);
  for (const auto& w : warnings) std::cerr << "warning: " << w << '\n';
  return d;
}

cfdx::Model model_of(const Options& o, const cfdx::FeatureSchema& schema) {
  if (o.model.empty()) cfdx::fail(cfdx::ErrorCode::InvalidArgument, "--model is required");
  return cfdx::load_model(o.model, &schema);
}

cfdx::CfConfig cf_config(const Options& o) {
  cfdx::CfConfig c;
  c.k = o.k;
  c.lambda1 = o.lambda1;
  c.lambda2 = o.lambda2;
  c.seed = o.seed;
  c.validate();
  return c;
}

std::ofstream open_out(const Options& o, const std::string& name) {
  fs::create_directories(o.out);
  const auto path = fs::path(o.out) / name;
  std::ofstream f(path, std::ios::binary);
  if (!f) cfdx::fail(cfdx::ErrorCode::IoError, "cannot write output", path.string());
  return f;
}

void write_json(const Options& o, const std::string& name, const json& j) { open_out(o, name) << j.dump(2) << '\n'; }

const cfdx::PatientRecord& record_of(const Options& o, const cfdx::Dataset& d) {
  if (o.record.empty()) cfdx::fail(cfdx::ErrorCode::InvalidArgument, "--record is required");
  const auto* r = d.find(o.record);
  if (!r) cfdx::fail(cfdx::ErrorCode::InvalidArgument, "no record with this id", o.record);
  return *r;
}

std::vector<std::size_t> classes_or_all(const cfdx::FeatureSchema& schema, const std::string& name) {
  if (!name.empty()) return {schema.require_class(name)};
  std::vector<std::size_t> all(schema.class_count());
  for (std::size_t c = 0; c < all.size(); ++c) all[c] = c;
  return all;
}

int cmd_ingest(const Options& o) {
  const auto schema = schema_of(o);
  cfdx::Dataset d;
  std::vector<std::string> warnings;
  if (o.synthetic) {
    cfdx::SyntheticConfig sc;
    sc.seed = o.seed;
    d = cfdx::synthetic_cohort(sc);
  } else {
    if (o.data.empty()) cfdx::fail(cfdx::ErrorCode::InvalidArgument, "--data or --synthetic is required");
    d = cfdx::load_dataset(o.data, schema, &warnings);
  }
  {
    auto f = open_out(o, "dataset.csv");
    cfdx::write_dataset(f, d);
  }
  json counts = json::object();
  const auto cc = d.class_counts();
  for (std::size_t c = 0; c < cc.size(); ++c) counts[d.schema().class_name(c)] = cc[c];
  std::size_t unknown = 0;
  for (const auto& r : d.records()) unknown += r.label ? 0 : 1;
  counts[std::string(cfdx::kUnknownLabel)] = unknown;
  write_json(o, "ingest.json",
             {{"records", d.size()}, {"class_counts", counts}, {"warnings", warnings},
              {"schema_hash", d.schema().hash()}});
  write_json(o, "schema.json", d.schema().to_json());
  std::cout << d.size() << " records\n";
  return 0;
}

int cmd_train(const Options& o) {
  const auto schema = schema_of(o);
  const auto d = data_of(o, schema);
  cfdx::TrainConfig tc;
  tc.seed = o.seed;
  const auto res = cfdx::train_with_history(d, tc);
  const auto path = o.model.empty() ? (fs::path(o.out) / "model.json").string() : o.model;
  if (auto parent = fs::path(path).parent_path(); !parent.empty()) fs::create_directories(parent);
  cfdx::save_model(path, res.model);
  const auto m = cfdx::evaluate_macro(res.model, d);
  write_json(o, "train.json",
             {{"epochs", res.loss_history.size() - 1},
              {"initial_loss", res.loss_history.front()},
              {"final_loss", res.loss_history.back()},
              {"training_macro_f1", m.macro_f1},
              {"model", fs::path(path).lexically_proximate(o.out).generic_string()}});
  std::cout << "model written to " << path << '\n';
  return 0;
}

int cmd_evaluate(const Options& o) {
  const auto schema = schema_of(o);
  const auto d = data_of(o, schema);
  const auto model = model_of(o, schema);
  const auto m = cfdx::evaluate_macro(model, d);
  json per = json::object();
  for (std::size_t c = 0; c < m.per_class.size(); ++c) {
    const auto& pc = m.per_class[c];
    per[schema.class_name(c)] = {{"tp", pc.tp}, {"fp", pc.fp}, {"fn", pc.fn}, {"tn", pc.tn}};
  }
  write_json(o, "evaluation.json",
             {{"macro_precision", m.macro_precision}, {"macro_recall", m.macro_recall}, {"macro_f1", m.macro_f1},
              {"per_class", per}});
  std::cout << "macro F1 " << m.macro_f1 << '\n';
  return 0;
}

int cmd_explain(const Options& o) {
  const auto schema = schema_of(o);
  const auto d = data_of(o, schema);
  const auto model = model_of(o, schema);
  const auto& rec = record_of(o, d);
  std::vector<cfdx::CounterfactualSet> sets;
  for (auto t : classes_or_all(schema, o.target)) sets.push_back(cfdx::generate(model, rec, t, cf_config(o)));
  json out = json::array();
  for (const auto& s : sets) out.push_back(cfdx::counterfactual_set_json(schema, s));
  write_json(o, "counterfactuals.json", out);
  auto f = open_out(o, "counterfactuals.csv");
  cfdx::write_counterfactual_csv(f, schema, sets);
  return 0;
}

int cmd_classify(const Options& o) {
  const auto schema = schema_of(o);
  const auto d = data_of(o, schema);
  const auto model = model_of(o, schema);
  std::vector<const cfdx::PatientRecord*> targets;
  if (!o.record.empty()) {
    targets.push_back(&record_of(o, d));
  } else {
    for (const auto& r : d.records())
      if (!r.label) targets.push_back(&r);
  }
  if (targets.empty()) cfdx::fail(cfdx::ErrorCode::InvalidArgument, "no UNKNOWN records; pass --record");
  json out = json::array();
  auto csv = open_out(o, "distances.csv");
  bool header = true;
  for (const auto* r : targets) {
    const auto rep = cfdx::classify_unknown(model, cf_config(o), *r);
    out.push_back(cfdx::distance_report_json(schema, rep));
    std::ostringstream block;
    cfdx::write_distance_csv(block, schema, rep);
    std::string text = block.str();
    if (!header) text = text.substr(text.find('\n') + 1);
    header = false;
    csv << text;
    std::cout << r->id << ' ' << schema.class_name(rep.predicted) << '\n';
  }
  write_json(o, "distances.json", out);
  return 0;
}

int cmd_report(const Options& o) {
  const auto schema = schema_of(o);
  const auto d = data_of(o, schema);
  const auto model = model_of(o, schema);
  std::vector<cfdx::ChangeFrequencyReport> reps;
  json out = json::array();
  for (auto s : classes_or_all(schema, o.from))
    for (auto t : classes_or_all(schema, o.to)) {
      const auto sets = cfdx::generate_population(model, d, s, t, cf_config(o));
      auto rep = cfdx::change_frequency(schema, sets);
      if (sets.empty()) {
        rep.source_class = schema.class_name(s);
        rep.target_class = schema.class_name(t);
      }
      out.push_back(cfdx::change_frequency_json(rep, o.top));
      reps.push_back(std::move(rep));
    }
  write_json(o, "changes.json", out);
  auto f = open_out(o, "changes.csv");
  cfdx::write_change_frequency_csv(f, reps);
  return 0;
}

int cmd_stats(const Options& o) {
  const auto schema = schema_of(o);
  const auto d = data_of(o, schema);
  const auto model = model_of(o, schema);
  std::vector<cfdx::CounterfactualSet> sets;
  for (auto s : classes_or_all(schema, o.from))
    for (auto t : classes_or_all(schema, o.to)) {
      auto part = cfdx::generate_population(model, d, s, t, cf_config(o));
      sets.insert(sets.end(), part.begin(), part.end());
    }
  const auto rows = cfdx::significance_suite(d, sets);
  write_json(o, "stats.json", cfdx::significance_json(rows));
  auto f = open_out(o, "stats.csv");
  cfdx::write_significance_csv(f, rows);
  return 0;
}

int cmd_kde(const Options& o) {
  const auto schema = schema_of(o);
  const auto d = data_of(o, schema);
  const std::size_t j = schema.require_feature(o.feature);
  std::vector<double> values;
  for (auto c : classes_or_all(schema, o.cls))
    for (auto i : d.indices_of_class(c)) values.push_back(d[i].values[j]);
  const auto curve = cfdx::kde_estimate(values, o.bandwidth);
  write_json(o, "kde.json", cfdx::kde_json(curve));
  auto f = open_out(o, "kde.csv");
  cfdx::write_kde_csv(f, curve);
  return 0;
}

int cmd_augment(const Options& o) {
  const auto schema = schema_of(o);
  const auto d = data_of(o, schema);
  const auto model = o.model.empty() ? cfdx::train(d) : model_of(o, schema);
  std::vector<cfdx::ScenarioKind> kinds;
  if (o.scenario == "all")
    kinds = {cfdx::ScenarioKind::Baseline, cfdx::ScenarioKind::A, cfdx::ScenarioKind::B, cfdx::ScenarioKind::C};
  else
    kinds = {cfdx::parse_scenario(o.scenario)};

  std::vector<cfdx::ExperimentResult> results;
  json out = json::array();
  for (auto kind : kinds) {
    const auto counts = d.class_counts();
    const auto sc = cfdx::make_scenario(kind, counts, o.seed);
    const auto eligible = cfdx::eligible_parents(d, sc);
    const auto pool = cfdx::build_cf_pool(model, d, cfdx::pool_needs(sc, counts), cf_config(o), eligible);
    results.push_back(cfdx::run_experiment(d, pool, sc, o.runs));
    out.push_back(cfdx::experiment_json(results.back()));

    const auto split = cfdx::build_scenario(d, pool, sc);
    const std::string tag = std::string(cfdx::to_string(kind));
    {
      auto f = open_out(o, "scenario_" + tag + "_train.csv");
      cfdx::write_dataset(f, split.train);
    }
    {
      auto f = open_out(o, "scenario_" + tag + "_test.csv");
      cfdx::write_dataset(f, split.test);
    }
    auto prov = open_out(o, "scenario_" + tag + "_provenance.csv");
    cfdx::write_provenance_csv(prov, split);
  }
  write_json(o, "experiment.json", out);
  auto f = open_out(o, "experiment.csv");
  cfdx::write_experiment_csv(f, results);
  for (const auto& r : results)
    std::cout << cfdx::to_string(r.scenario.kind) << " macro F1 " << cfdx::percent_cell(r.f1, r.runs.size()) << '\n';
  return 0;
}

int cmd_serve(const Options& o) {
  const auto schema = schema_of(o);
  const auto d = data_of(o, schema);
  const auto model = model_of(o, schema);
  cfdx::CfConfig defaults = cf_config(o);
  cfdx::Service service(model, d, defaults);
  httplib::Server server;
  service.bind(server);
  std::cout << "listening on " << o.host << ':' << o.port << std::endl;
  if (!server.listen(o.host, o.port)) cfdx::fail(cfdx::ErrorCode::IoError, "cannot bind", o.host);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cfdx: counterfactual explanations for tabular classifiers"};
  app.require_subcommand(1);
  Options o;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--data", o.data, "cohort CSV");
    sub->add_option("--schema", o.schema, "schema JSON (default: canonical MRI schema)");
    sub->add_option("--model", o.model, "model JSON");
    sub->add_option("--seed", o.seed, "random seed");
    sub->add_option("--out", o.out, "output directory");
  };
  auto engine = [&](CLI::App* sub) {
    sub->add_option("--k", o.k, "counterfactuals per request")->check(CLI::PositiveNumber);
    sub->add_option("--lambda1", o.lambda1, "proximity weight")->check(CLI::NonNegativeNumber);
    sub->add_option("--lambda2", o.lambda2, "diversity weight")->check(CLI::NonNegativeNumber);
  };

  std::vector<std::pair<CLI::App*, int (*)(const Options&)>> commands;
  auto add = [&](const char* name, const char* help, int (*fn)(const Options&)) {
    auto* sub = app.add_subcommand(name, help);
    common(sub);
    commands.emplace_back(sub, fn);
    return sub;
  };

  add("ingest", "validate a cohort CSV and write it back normalized", cmd_ingest)
      ->add_flag("--synthetic", o.synthetic, "emit the synthetic cohort instead of reading --data");
  add("train", "fit the logistic-regression model", cmd_train);
  add("evaluate", "macro precision, recall and F1 of a model on a dataset", cmd_evaluate);
  auto* explain = add("explain", "counterfactuals for one record", cmd_explain);
  engine(explain);
  explain->add_option("--record", o.record, "record id")->required();
  explain->add_option("--target", o.target, "target class (default: every class)");
  auto* classify = add("classify", "distance report for UNKNOWN records", cmd_classify);
  engine(classify);
  classify->add_option("--record", o.record, "record id (default: every UNKNOWN record)");
  auto* report = add("report", "change frequency per transition", cmd_report);
  engine(report);
  report->add_option("--from", o.from, "source class (default: all)");
  report->add_option("--to", o.to, "target class (default: all)");
  report->add_option("--top", o.top, "features listed as top");
  auto* stats = add("stats", "two-track significance suite", cmd_stats);
  engine(stats);
  stats->add_option("--from", o.from, "source class (default: all)");
  stats->add_option("--to", o.to, "target class (default: all)");
  auto* kde = add("kde", "kernel density curve for one feature", cmd_kde);
  kde->add_option("--feature", o.feature, "feature name")->required();
  kde->add_option("--class", o.cls, "class (default: all records)");
  kde->add_option("--bandwidth", o.bandwidth, "fixed bandwidth (default: Scott's rule)");
  auto* augment = add("augment", "augmentation scenarios and repeated evaluation", cmd_augment);
  engine(augment);
  augment->add_option("--scenario", o.scenario, "baseline, A, B, C or all")
      ->check(CLI::IsMember({"baseline", "A", "B", "C", "all"}));
  augment->add_option("--runs", o.runs, "evaluation runs")->check(CLI::PositiveNumber);
  auto* serve = add("serve", "HTTP JSON API", cmd_serve);
  engine(serve);
  serve->add_option("--port", o.port, "listen port");
  serve->add_option("--host", o.host, "listen address");

  CLI11_PARSE(app, argc, argv);
  try {
    for (auto& [sub, fn] : commands)
      if (sub->parsed()) return fn(o);
  } catch (const cfdx::Error& e) {
    std::cerr << "error: " << cfdx::to_string(e.code()) << ": " << e.what();
    if (!e.detail().empty()) std::cerr << " (" << e.detail() << ')';
    std::cerr << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}
