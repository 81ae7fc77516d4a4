#include <openssl/evp.h>

#include <CLI11.hpp>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <sstream>

#include "re3/app.hpp"
#include "re3/error.hpp"
#include "re3/seed.hpp"

namespace re3 {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

std::string_view version_string() { return "re3 " RE3_VERSION; }

std::string sha256_hex(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr);
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += kHex[digest[i] >> 4];
    out += kHex[digest[i] & 15];
  }
  return out;
}

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingArtifact("cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return sha256_hex(ss.str());
}

namespace {

struct Options {
  bool verbose = false;
  fs::path out;
  fs::path config;
  fs::path corpus;
  fs::path checkpoint;
  fs::path run;
  std::optional<std::uint64_t> seed;
  std::size_t n = 2000;
  std::string mix = KindMix{}.to_string();
  std::size_t max_new_tokens = 80;
  std::size_t limit = 0;
  std::size_t repeats = 1;
  bool latency = false;
};

// Progress position for error attribution.
struct Where {
  std::string text;
  void at_stage(int stage, std::size_t step, std::size_t total) {
    text = "stage " + std::to_string(stage) + " step " + std::to_string(step + 1) + "/" + std::to_string(total);
  }
};

class Session {
 public:
  Session(std::string command, const Options& o, std::ostream& out, std::ostream& err)
      : command_(std::move(command)), o_(o), out_(out), err_(err) {}

  Where where;

  void log(const std::string& line) const {
    if (o_.verbose) err_ << line << "\n";
  }

  ProgressFn progress() {
    return [this](int stage, std::size_t step, std::size_t total, double loss) {
      where.at_stage(stage, step, total);
      if (o_.verbose && (step % 100 == 0 || step + 1 == total))
        err_ << "stage " << stage << " " << step + 1 << "/" << total << " loss " << loss << "\n";
    };
  }

  void prepare_out(bool must_be_empty = false) const {
    if (o_.out.empty()) throw ConfigError("--out is required");
    if (must_be_empty && fs::exists(o_.out) && !fs::is_empty(o_.out))
      throw ConfigError("output directory " + o_.out.string() + " is not empty");
    fs::create_directories(o_.out);
  }

  fs::path out_path(const std::string& name) const { return o_.out / name; }

  TrainConfig train_config() {
    TrainConfig config;
    if (!o_.config.empty()) {
      config = TrainConfig::load(o_.config);
      manifest_["config"] = {{"path", o_.config.string()}, {"sha256", sha256_file(o_.config)}};
    }
    if (o_.seed) config.seed = *o_.seed;
    return config;
  }

  std::vector<CorpusRecord> load_corpus(const fs::path& path) {
    if (!fs::exists(path)) throw MissingArtifact("corpus " + path.string() + " does not exist");
    manifest_["corpus"] = {{"path", path.string()}, {"sha256", sha256_file(path)}};
    return read_corpus(path);
  }

  ModelBundle load_bundle(const fs::path& path) {
    if (!fs::exists(path)) throw MissingArtifact("checkpoint " + path.string() + " does not exist");
    manifest_["checkpoint"] = {{"path", path.string()}, {"sha256", sha256_file(path)}};
    return load_checkpoint(path);
  }

  void write_text(const std::string& name, const std::string& text) {
    const auto path = out_path(name);
    std::ofstream(path, std::ios::binary) << text;
    artifact(name);
  }

  void artifact(const std::string& name) { manifest_["artifacts"][name] = sha256_file(out_path(name)); }

  Json& manifest() { return manifest_; }

  void record_stages(const std::vector<StageResult>& stages, const TrainConfig& config) {
    manifest_["resolved_config"] = config.to_text();
    manifest_["resolved_config_sha256"] = sha256_hex(config.to_text());
    Json list = Json::array();
    for (const auto& s : stages) {
      Json j{{"stage", s.stage_id}, {"steps", s.steps}, {"final_loss", s.losses.empty() ? 0.0 : s.losses.back()},
             {"seconds", s.seconds}};
      if (!s.checkpoint.empty()) {
        j["checkpoint"] = s.checkpoint.filename().string();
        j["sha256"] = sha256_file(s.checkpoint);
      }
      list.push_back(std::move(j));
    }
    manifest_["stages"] = std::move(list);
  }

  void finish() {
    Json head{{"tool", version_string()}, {"command", command_}};
    if (o_.seed) head["seed"] = *o_.seed;
    head.update(manifest_);
    std::ofstream(out_path("manifest.json")) << head.dump(2) << "\n";
  }

 private:
  std::string command_;
  const Options& o_;
  std::ostream& out_;
  std::ostream& err_;
  Json manifest_ = Json::object();
};

std::string generation_table(const ModelBundle& bundle, const std::vector<CorpusRecord>& corpus, SampleKind kind,
                             const Options& o) {
  std::string out = "record\tinstruction\tgenerated\treference\n";
  std::size_t count = 0;
  for (const auto& r : corpus) {
    if (r.split != Split::Test || r.kind != kind) continue;
    if (o.limit && count++ == o.limit) break;
    auto flat = [](std::string s) {
      for (auto& c : s)
        if (c == '\n' || c == '\t') c = ' ';
      return s;
    };
    out += std::to_string(r.record_id) + "\t" + flat(r.instruction) + "\t" +
           flat(generate(bundle, r.image, r.instruction, o.max_new_tokens)) + "\t" + flat(r.target) + "\n";
  }
  return out;
}

void cmd_synthesize(Session& s, const Options& o) {
  s.prepare_out();
  RuleBasedClient client;
  const auto mix = KindMix::parse(o.mix);
  const auto corpus = build_corpus(o.n, mix, o.seed.value_or(0), client);
  write_corpus(corpus, s.out_path("corpus.jsonl"));
  s.manifest()["n"] = o.n;
  s.manifest()["mix"] = mix.to_string();
  s.manifest()["client"] = client.id();
  s.artifact("corpus.jsonl");
  s.manifest()["corpus"] = {{"path", "corpus.jsonl"}, {"sha256", s.manifest()["artifacts"]["corpus.jsonl"]}};
  s.finish();
}

void cmd_train(Session& s, const Options& o) {
  auto config = s.train_config();
  const auto corpus = s.load_corpus(o.corpus);
  s.prepare_out();
  const auto result = run_pipeline(config, corpus, o.out, s.progress());
  s.record_stages(result.stages, config);
  for (int i = 1; i <= 3; ++i) s.artifact("stage" + std::to_string(i) + ".ckpt");
  s.finish();
}

void cmd_generate(Session& s, const Options& o, SampleKind kind) {
  const auto bundle = s.load_bundle(o.checkpoint);
  const auto corpus = s.load_corpus(o.corpus);
  s.prepare_out();
  const std::string name = kind == SampleKind::Report ? "generations.tsv" : "summaries.tsv";
  s.write_text(name, generation_table(bundle, corpus, kind, o));
  s.finish();
}

void cmd_evaluate(Session& s, const Options& o) {
  fs::path checkpoint = o.checkpoint, corpus_path = o.corpus;
  if (!o.run.empty()) {
    // A run directory must still hold every artifact the pipeline wrote.
    for (const char* name : {"stage1.ckpt", "stage2.ckpt", "stage3.ckpt", "corpus.jsonl"})
      if (!fs::exists(o.run / name)) throw MissingArtifact((o.run / name).string() + " does not exist");
    if (checkpoint.empty()) checkpoint = o.run / "stage3.ckpt";
    if (corpus_path.empty()) corpus_path = o.run / "corpus.jsonl";
  }
  if (checkpoint.empty() || corpus_path.empty())
    throw ConfigError("evaluate needs --run or both --checkpoint and --corpus");
  const auto bundle = s.load_bundle(checkpoint);
  const auto corpus = s.load_corpus(corpus_path);
  s.prepare_out();
  EvalOptions eval;
  eval.max_new_tokens = o.max_new_tokens;
  const auto report = evaluate(bundle, corpus, Embedder::from_bundle(bundle), eval);
  s.write_text("metrics.txt", report.to_text());
  if (o.latency) {
    LatencyOptions lat;
    lat.max_new_tokens = o.max_new_tokens;
    lat.repeats = o.repeats;
    lat.limit = o.limit;
    s.write_text("latency.txt", latency_to_text(measure_latency(bundle, corpus, lat)));
  }
  s.finish();
}

std::vector<CorpusRecord> fresh_corpus(Session& s, const Options& o) {
  RuleBasedClient client;
  const auto seed = sub_seed(o.seed.value_or(0), "corpus");
  s.manifest()["corpus_seed"] = seed;
  s.manifest()["n"] = o.n;
  return build_corpus(o.n, KindMix::parse(o.mix), seed, client);
}

void cmd_ablate(Session& s, const Options& o, std::ostream& out) {
  auto config = s.train_config();
  s.prepare_out();
  const auto corpus = o.corpus.empty() ? fresh_corpus(s, o) : s.load_corpus(o.corpus);
  EvalOptions eval;
  eval.max_new_tokens = o.max_new_tokens;
  const auto result = run_ablation(config, corpus, eval, s.progress());
  s.record_stages(result.stages, config);
  s.write_text("ablation.tsv", result.to_text());
  s.manifest()["ordered"] = result.ordered();
  s.finish();
  out << result.to_text();
}

void cmd_pipeline(Session& s, const Options& o, std::ostream& out) {
  auto config = s.train_config();
  s.prepare_out(true);
  const auto corpus = fresh_corpus(s, o);
  write_corpus(corpus, s.out_path("corpus.jsonl"));
  s.artifact("corpus.jsonl");
  s.manifest()["corpus"] = {{"path", "corpus.jsonl"}, {"sha256", s.manifest()["artifacts"]["corpus.jsonl"]}};
  const auto result = run_pipeline(config, corpus, o.out, s.progress());
  s.record_stages(result.stages, config);
  for (int i = 1; i <= 3; ++i) s.artifact("stage" + std::to_string(i) + ".ckpt");
  s.where.text = "evaluation";
  EvalOptions eval;
  eval.max_new_tokens = o.max_new_tokens;
  const auto report = evaluate(result.bundle, corpus, Embedder::from_bundle(result.bundle), eval);
  s.write_text("metrics.txt", report.to_text());
  s.finish();
  const auto text = report.to_text();
  out << text.substr(0, text.find("\n[instances]"));
}

void cmd_validate(Session& s, const Options& o, std::ostream& out) {
  if (o.corpus.empty() && o.config.empty()) throw ConfigError("validate needs --corpus and/or --config");
  if (!o.config.empty()) {
    s.train_config();
    out << "config ok: " << o.config.string() << "\n";
  }
  if (!o.corpus.empty()) {
    const auto corpus = s.load_corpus(o.corpus);
    validate_corpus(corpus);
    out << "corpus ok: " << corpus.size() << " records\n";
  }
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Staged vision-language training and report evaluation at desk scale", "re3"};
  app.set_version_flag("--version", std::string(version_string()));
  app.require_subcommand(1);
  Options o;
  app.add_flag("-v,--verbose", o.verbose, "Log progress to stderr");

  auto out_opt = [&](CLI::App* c, bool required = true) {
    auto* opt = c->add_option("--out", o.out, "Output directory");
    if (required) opt->required();
  };
  auto seed_opt = [&](CLI::App* c) { c->add_option("--seed", o.seed, "Master seed"); };

  auto* synth = app.add_subcommand("synthesize", "Write a synthetic corpus");
  synth->add_option("--n", o.n, "Number of records")->capture_default_str();
  synth->add_option("--mix", o.mix, "Kind proportions")->capture_default_str();
  seed_opt(synth);
  out_opt(synth);

  auto* train = app.add_subcommand("train", "Run the three training stages");
  train->add_option("--config", o.config, "Training config (INI)");
  train->add_option("--corpus", o.corpus, "Corpus file")->required();
  seed_opt(train);
  out_opt(train);

  std::array<CLI::App*, 2> gens{app.add_subcommand("generate", "Generate findings for test report records"),
                                app.add_subcommand("summarize", "Summarize findings for test summarization records")};
  for (auto* g : gens) {
    g->add_option("--checkpoint", o.checkpoint, "Model checkpoint")->required();
    g->add_option("--corpus", o.corpus, "Corpus file")->required();
    g->add_option("--limit", o.limit, "Stop after this many records (0 = all)");
    g->add_option("--max-new-tokens", o.max_new_tokens)->capture_default_str();
    out_opt(g);
  }

  auto* eval = app.add_subcommand("evaluate", "Score a checkpoint on the test split");
  eval->add_option("--run", o.run, "Pipeline output directory");
  eval->add_option("--checkpoint", o.checkpoint, "Model checkpoint");
  eval->add_option("--corpus", o.corpus, "Corpus file");
  eval->add_flag("--latency", o.latency, "Also time generation (written to latency.txt)");
  eval->add_option("--repeats", o.repeats, "Timed passes per instance")->capture_default_str();
  eval->add_option("--limit", o.limit, "Instances per task for latency (0 = all)");
  eval->add_option("--max-new-tokens", o.max_new_tokens)->capture_default_str();
  out_opt(eval);

  auto* ablate = app.add_subcommand("ablate", "Compare baseline, (a), (b) and full settings");
  ablate->add_option("--config", o.config, "Training config (INI)");
  ablate->add_option("--corpus", o.corpus, "Corpus file (default: synthesize from --seed)");
  ablate->add_option("--n", o.n, "Synthetic corpus size")->capture_default_str();
  ablate->add_option("--max-new-tokens", o.max_new_tokens)->capture_default_str();
  seed_opt(ablate);
  out_opt(ablate);

  auto* pipeline = app.add_subcommand("pipeline", "Synthesize, train and evaluate into one directory");
  pipeline->add_option("--config", o.config, "Training config (INI)");
  pipeline->add_option("--n", o.n, "Synthetic corpus size")->capture_default_str();
  pipeline->add_option("--mix", o.mix, "Kind proportions")->capture_default_str();
  pipeline->add_option("--max-new-tokens", o.max_new_tokens)->capture_default_str();
  seed_opt(pipeline);
  out_opt(pipeline);

  auto* validate = app.add_subcommand("validate", "Check a corpus file and/or a training config");
  validate->add_option("--corpus", o.corpus, "Corpus file");
  validate->add_option("--config", o.config, "Training config (INI)");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForVersion&) {
    out << version_string() << "\n";
    return 0;
  } catch (const CLI::ParseError& e) {
    if (!args.empty() && args.front().rfind("-", 0) != 0 && !app.get_subcommand_no_throw(args.front())) {
      err << "error: " << UnknownCommand("'" + args.front() + "'").what() << "\n";
    } else {
      err << "error: " << e.what() << "\n";
    }
    return 1;
  }

  const auto* sub = app.get_subcommands().front();
  Session s(sub->get_name(), o, out, err);
  try {
    const auto& name = sub->get_name();
    if (name == "synthesize") cmd_synthesize(s, o);
    else if (name == "train") cmd_train(s, o);
    else if (name == "generate") cmd_generate(s, o, SampleKind::Report);
    else if (name == "summarize") cmd_generate(s, o, SampleKind::Summarization);
    else if (name == "evaluate") cmd_evaluate(s, o);
    else if (name == "ablate") cmd_ablate(s, o, out);
    else if (name == "pipeline") cmd_pipeline(s, o, out);
    else cmd_validate(s, o, out);
    return 0;
  } catch (const Error& e) {
    err << "error" << (s.where.text.empty() ? "" : " (" + s.where.text + ")") << ": " << e.what() << "\n";
    return e.is_validation() ? 1 : 2;
  } catch (const std::exception& e) {
    err << "error" << (s.where.text.empty() ? "" : " (" + s.where.text + ")") << ": " << e.what() << "\n";
    return 2;
  }
}

int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  return dispatch(std::vector<std::string>(argv + 1, argv + argc), out, err);
}

}  // namespace re3
