#include "crossglg/cli.hpp"

#include "crossglg/dataset.hpp"
#include "crossglg/errors.hpp"
#include "crossglg/synthetic.hpp"
#include "crossglg/text.hpp"
#include "crossglg/topology.hpp"
#include "crossglg/training.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cctype>
#include <fstream>
#include <iomanip>
#include <map>
#include <memory>
#include <optional>
#include <sstream>

namespace crossglg {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

json eval_to_json(const EvalOptions& e) {
  return {{"classifier", to_string(e.classifier)},
          {"episodes", e.episodes},
          {"seed", e.seed},
          {"threads", e.threads},
          {"dc",
           {{"k", e.dc.k},
            {"alpha", e.dc.alpha},
            {"lambda", e.dc.lambda},
            {"n_samples", e.dc.n_samples},
            {"steps", e.dc.steps},
            {"lr", e.dc.lr},
            {"momentum", e.dc.momentum},
            {"diagonal", e.dc.diagonal}}}};
}

void eval_from_json(const json& j, EvalOptions& e) {
  if (j.contains("classifier")) e.classifier = parse_classifier(j.at("classifier").get<std::string>());
  e.episodes = j.value("episodes", e.episodes);
  e.seed = j.value("seed", e.seed);
  e.threads = j.value("threads", e.threads);
  if (j.contains("dc")) {
    const auto& d = j.at("dc");
    e.dc.k = d.value("k", e.dc.k);
    e.dc.alpha = d.value("alpha", e.dc.alpha);
    e.dc.lambda = d.value("lambda", e.dc.lambda);
    e.dc.n_samples = d.value("n_samples", e.dc.n_samples);
    e.dc.steps = d.value("steps", e.dc.steps);
    e.dc.lr = d.value("lr", e.dc.lr);
    e.dc.momentum = d.value("momentum", e.dc.momentum);
    e.dc.diagonal = d.value("diagonal", e.dc.diagonal);
  }
}

std::string path_or_empty(const json& j, const char* key, const fs::path& fallback) {
  return j.contains(key) ? j.at(key).get<std::string>() : fallback.string();
}

}  // namespace

void to_json(json& j, const RunConfig& c) {
  j = json{{"model", c.model},
           {"data", c.data.string()},
           {"descriptions", c.descriptions.string()},
           {"embeddings", c.embeddings.string()},
           {"output", c.output.string()},
           {"checkpoint", c.checkpoint.string()},
           {"base_classes", c.base_classes},
           {"split", c.split.string()},
           {"embedder", c.embedder},
           {"eval", eval_to_json(c.eval)}};
}

void from_json(const json& j, RunConfig& c) {
  if (j.contains("model")) {
    ModelConfig m = c.model;
    from_json(j.at("model"), m);
    c.model = m;
  }
  c.data = path_or_empty(j, "data", c.data);
  c.descriptions = path_or_empty(j, "descriptions", c.descriptions);
  c.embeddings = path_or_empty(j, "embeddings", c.embeddings);
  c.output = path_or_empty(j, "output", c.output);
  c.checkpoint = path_or_empty(j, "checkpoint", c.checkpoint);
  c.base_classes = j.value("base_classes", c.base_classes);
  c.split = path_or_empty(j, "split", c.split);
  c.embedder = j.value("embedder", c.embedder);
  if (j.contains("eval")) eval_from_json(j.at("eval"), c.eval);
}

fs::path resolve_input(const fs::path& p) {
  if (p.empty() || p.is_absolute() || fs::exists(p)) return p;
  const auto rooted = data_root() / p;
  return fs::exists(rooted) ? rooted : p;
}

namespace {

// Flag values; unset ones leave the config untouched.
struct Overrides {
  std::optional<std::string> config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> data, descriptions, embeddings, output, checkpoint, base_classes, split, embedder;
  std::optional<int> epochs, batch, frames, threads, blocks, pre_blocks;
  std::optional<double> lr, alpha1, alpha2, grad_clip;
  std::optional<std::string> optimizer;
  std::optional<bool> g2l, l2g, static_text, reweight_residual;
  std::optional<std::string> classifier;
  std::optional<int> episodes, dc_k, n_samples;
  std::optional<double> dc_alpha, lambda;
};

void add_path_flags(CLI::App* sub, Overrides& o) {
  sub->add_option("--data", o.data, "dataset file (.jsonl or .bin)");
  sub->add_option("--descriptions", o.descriptions, "action description file (.jsonl)");
  sub->add_option("--embeddings", o.embeddings, "external text embedding manifest");
  sub->add_option("--base-classes", o.base_classes, "base class list, e.g. 0-9");
  sub->add_option("--split", o.split, "split file with train/novel lists");
}

void add_model_flags(CLI::App* sub, Overrides& o) {
  sub->add_option("--epochs", o.epochs);
  sub->add_option("--batch", o.batch);
  sub->add_option("--frames", o.frames, "input frames T");
  sub->add_option("--threads", o.threads);
  sub->add_option("--lr", o.lr);
  sub->add_option("--alpha1", o.alpha1, "calibration loss weight");
  sub->add_option("--alpha2", o.alpha2, "text-guided branch loss weight");
  sub->add_option("--grad-clip", o.grad_clip);
  sub->add_option("--optimizer", o.optimizer, "sgd or adam");
  sub->add_option("--blocks", o.blocks, "encoding blocks N");
  sub->add_option("--pre-blocks", o.pre_blocks, "blocks before the importance head");
  sub->add_option("--g2l", o.g2l, "calibration loss and joint reweighting (true/false)");
  sub->add_option("--l2g", o.l2g, "text-guided branch (true/false)");
  sub->add_option("--static-text", o.static_text, "keep text tokens fixed across interaction blocks");
  sub->add_option("--reweight-residual", o.reweight_residual, "scale joints by mix*k + (1-mix)");
  sub->add_option("--embedder", o.embedder, "text embedder for descriptions without a manifest");
}

void add_eval_flags(CLI::App* sub, Overrides& o) {
  sub->add_option("--classifier", o.classifier, "dc or prototype");
  sub->add_option("--episodes", o.episodes);
  sub->add_option("--dc-k", o.dc_k, "nearest base classes");
  sub->add_option("--dc-alpha", o.dc_alpha, "covariance ridge");
  sub->add_option("--lambda", o.lambda, "Tukey exponent");
  sub->add_option("--n-samples", o.n_samples, "sampled features per class");
}

template <class T, class U>
void set_if(const std::optional<T>& v, U& dst) {
  if (v) dst = *v;
}

RunConfig build_config(const Overrides& o) {
  RunConfig c;
  if (o.config) {
    const auto path = resolve_input(*o.config);
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path.string());
    json j;
    try {
      j = json::parse(in);
    } catch (const json::exception& e) {
      throw ConfigError("malformed config " + path.string() + ": " + e.what());
    }
    from_json(j, c);
  }
  auto& m = c.model;
  if (o.seed) {
    m.seed = *o.seed;
    c.eval.seed = *o.seed;
  }
  set_if(o.data, c.data);
  set_if(o.descriptions, c.descriptions);
  set_if(o.embeddings, c.embeddings);
  set_if(o.output, c.output);
  set_if(o.checkpoint, c.checkpoint);
  set_if(o.base_classes, c.base_classes);
  set_if(o.split, c.split);
  set_if(o.embedder, c.embedder);
  set_if(o.epochs, m.epochs);
  set_if(o.batch, m.batch);
  set_if(o.frames, m.encoder.frames);
  if (o.threads) {
    m.threads = *o.threads;
    c.eval.threads = *o.threads;
  }
  set_if(o.blocks, m.encoder.blocks);
  set_if(o.pre_blocks, m.encoder.pre_blocks);
  set_if(o.lr, m.lr);
  set_if(o.alpha1, m.alpha1);
  set_if(o.alpha2, m.alpha2);
  set_if(o.grad_clip, m.grad_clip);
  set_if(o.optimizer, m.optimizer);
  set_if(o.g2l, m.g2l);
  set_if(o.l2g, m.l2g);
  set_if(o.static_text, m.interaction.static_text);
  set_if(o.reweight_residual, m.encoder.reweight_residual);
  if (o.classifier) c.eval.classifier = parse_classifier(*o.classifier);
  set_if(o.episodes, c.eval.episodes);
  set_if(o.dc_k, c.eval.dc.k);
  set_if(o.dc_alpha, c.eval.dc.alpha);
  set_if(o.lambda, c.eval.dc.lambda);
  set_if(o.n_samples, c.eval.dc.n_samples);
  c.data = resolve_input(c.data);
  c.descriptions = resolve_input(c.descriptions);
  c.embeddings = resolve_input(c.embeddings);
  c.checkpoint = resolve_input(c.checkpoint);
  c.split = resolve_input(c.split);
  return c;
}

void require_file(const fs::path& p, const std::string& what) {
  if (p.empty()) throw UsageError(what + " path is required");
  if (!fs::exists(p)) throw ConfigError(what + " not found: " + p.string());
}

void require_output(const fs::path& p) {
  if (p.empty()) throw UsageError("--out is required");
}

// Base and novel labels from --base-classes or --split. Without an explicit
// novel list every non-base label present in the data is novel.
std::pair<std::vector<int>, std::vector<int>> class_partition(const RunConfig& c, const Dataset& data) {
  std::vector<int> base, novel;
  if (!c.base_classes.empty()) {
    base = parse_class_list(c.base_classes);
  } else if (!c.split.empty()) {
    require_file(c.split, "split file");
    const auto split = load_class_split(c.split);
    base = split.train;
    novel = split.novel;
  } else {
    throw UsageError("--base-classes or --split is required");
  }
  std::sort(base.begin(), base.end());
  base.erase(std::unique(base.begin(), base.end()), base.end());
  if (novel.empty()) {
    for (int label : data.present_classes()) {
      if (!std::binary_search(base.begin(), base.end(), label)) novel.push_back(label);
    }
  }
  return {base, novel};
}

// Case-insensitive action name -> description.
std::map<std::string, ActionDescription> descriptions_by_name(const std::vector<ActionDescription>& descs) {
  std::map<std::string, ActionDescription> out;
  for (const auto& d : descs) out[to_lower(d.action_name)] = d;
  return out;
}

std::string class_name(const Dataset& data, int label) {
  const auto it = data.class_names.find(label);
  if (it == data.class_names.end()) throw DataError("dataset has no name for class " + std::to_string(label));
  return it->second;
}

struct PreparedTraining {
  Dataset base;
  SkeletonTopology topology;
  TrainingSet set;
};

PreparedTraining prepare_training(RunConfig& c) {
  require_file(c.data, "dataset");
  PreparedTraining p;
  p.topology = load_topology(c.model.topology);
  const auto data = load_dataset(c.data, p.topology);
  const auto [base_labels, novel_labels] = class_partition(c, data);
  (void)novel_labels;
  p.base = subset_by_labels(data, base_labels);
  if (p.base.size() == 0) throw DataError("no samples for the base classes");
  c.model.n_classes = int(p.base.present_classes().size());

  std::map<int, KeyJointDistribution> keys;
  std::map<int, JointTextEmbeddings> text;
  const bool need_desc = c.model.g2l || c.model.l2g;
  if (need_desc) {
    require_file(c.descriptions, "description file");
    const auto by_name = descriptions_by_name(ingest_descriptions(c.descriptions, p.topology));
    std::map<std::string, JointTextEmbeddings> external;
    if (!c.embeddings.empty()) {
      require_file(c.embeddings, "embedding manifest");
      for (auto& [name, e] : load_external_embeddings(c.embeddings, p.topology)) external[to_lower(name)] = e;
    }
    std::unique_ptr<TextEmbedder> embedder;
    if (external.empty()) embedder = make_embedder(c.embedder, c.model.interaction.text_dim);
    for (int label : p.base.present_classes()) {
      const auto name = to_lower(class_name(p.base, label));
      const auto it = by_name.find(name);
      if (it == by_name.end()) throw TextError("no description for action '" + name + "'");
      try {
        keys[label] = extract_key_joints(it->second, p.topology);
      } catch (const TextError& e) {
        throw TextError("action '" + name + "': " + e.what());
      }
      if (embedder) {
        text[label] = embed_joint_texts(it->second, *embedder, p.topology);
      } else {
        const auto e = external.find(name);
        if (e == external.end()) throw TextError("no embedding for action '" + name + "'");
        text[label] = e->second;
      }
    }
  }
  c.model.validate();
  p.set = make_training_set(p.base, p.topology, c.model, keys, text);
  return p;
}

void write_text_file(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc | std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << content;
}

// gen-data ------------------------------------------------------------------

struct GenFlags {
  int classes = 14;
  int per_class = 20;
  int frames = 40;
  double noise = 0.01;
  double distractor = 0.5;
  bool binary = false;
};

int cmd_gen_data(RunConfig& c, const GenFlags& g, std::ostream& out) {
  require_output(c.output);
  SyntheticSpec spec;
  spec.n_classes = g.classes;
  spec.samples_per_class = g.per_class;
  spec.frames = g.frames;
  spec.noise = g.noise;
  spec.distractor = g.distractor;
  const auto seed = c.model.seed;
  const auto data = generate_synthetic(spec, seed);
  const auto topology = load_topology(spec.topology);
  const auto descs = synthetic_descriptions(synthetic_classes(spec, seed), topology);

  fs::create_directories(c.output);
  const auto data_path = c.output / (g.binary ? "dataset.bin" : "dataset.jsonl");
  if (g.binary) {
    save_dataset_binary(data, data_path);
  } else {
    save_dataset(data, data_path);
  }
  save_descriptions(descs, topology, c.output / "descriptions.jsonl");
  out << "wrote " << data.size() << " sequences to " << data_path.string() << "\n";
  return 0;
}

// extract -------------------------------------------------------------------

int cmd_extract(RunConfig& c, std::ostream& out, std::ostream& err) {
  require_file(c.descriptions, "description file");
  require_output(c.output);
  const auto topology = load_topology(c.model.topology);
  const auto descs = ingest_descriptions(c.descriptions, topology);
  std::vector<KeyJointRecord> records;
  for (const auto& d : descs) {
    try {
      records.push_back({d.action_name, extract_key_joints(d, topology)});
    } catch (const TextError& e) {
      throw TextError("action '" + d.action_name + "': " + e.what());
    }
  }
  if (descs.empty()) err << "warning: no descriptions in " << c.descriptions.string() << "\n";
  if (c.output.has_parent_path()) fs::create_directories(c.output.parent_path());
  save_key_joints(records, c.output);
  out << "wrote " << records.size() << " key-joint records to " << c.output.string() << "\n";
  return 0;
}

// embed-text ----------------------------------------------------------------

int cmd_embed_text(RunConfig& c, std::optional<int> dim, std::ostream& out) {
  require_file(c.descriptions, "description file");
  require_output(c.output);
  const auto topology = load_topology(c.model.topology);
  const int d = dim.value_or(c.model.interaction.text_dim);
  if (d < 1) throw ConfigError("embedding dimension must be >= 1");
  const auto embedder = make_embedder(c.embedder, d);
  const auto descs = ingest_descriptions(c.descriptions, topology);
  std::map<std::string, JointTextEmbeddings> embeddings;
  for (const auto& desc : descs) embeddings[desc.action_name] = embed_joint_texts(desc, *embedder, topology);
  if (c.output.has_parent_path()) fs::create_directories(c.output.parent_path());
  save_external_embeddings(embeddings, topology, c.output);
  out << "embedded " << embeddings.size() << " actions with " << embedder->id() << "\n";
  return 0;
}

// train ---------------------------------------------------------------------

int cmd_train(RunConfig& c, bool resume, std::optional<int> stop_after, std::ostream& out) {
  require_output(c.output);
  TrainOptions opts;
  if (stop_after) opts.stop_after_epoch = *stop_after;
  opts.on_epoch = [&out](const EpochLog& e) {
    out << "epoch " << e.epoch << " L_s " << e.losses.l_s << " L_c " << e.losses.l_c << " L_calibrate "
        << e.losses.l_calibrate << " L_overall " << e.losses.l_overall << "\n";
  };
  ModelCheckpoint ck;
  if (resume) {
    require_file(c.checkpoint, "checkpoint");
    ck = load_checkpoint(c.checkpoint);
    c.model = ck.config;
    auto prepared = prepare_training(c);
    if (prepared.set.class_labels != ck.class_labels) throw DataError("base classes differ from the checkpoint's");
    continue_training(ck, prepared.set, opts);
  } else {
    auto prepared = prepare_training(c);
    ck = train(c.model, prepared.set, opts);
  }
  save_checkpoint(ck, c.output);
  write_loss_log(ck.meta.epochs, c.output / "loss_log.csv");
  out << "checkpoint " << c.output.string() << " epoch " << ck.meta.epoch << (ck.meta.frozen ? " frozen" : "")
      << "\n";
  return 0;
}

// eval ----------------------------------------------------------------------

int cmd_eval(RunConfig& c, std::ostream& out) {
  require_file(c.checkpoint, "checkpoint");
  require_file(c.data, "dataset");
  require_output(c.output);
  c.eval.dc.validate();
  if (c.eval.episodes < 1) throw ConfigError("episodes must be >= 1");
  const auto ck = load_checkpoint(c.checkpoint);
  if (!ck.meta.frozen) throw ConfigError("checkpoint is not frozen; finish training first");
  const auto topology = load_topology(ck.config.topology);
  const auto data = load_dataset(c.data, topology);
  const auto [base_labels, novel_labels] = class_partition(c, data);
  const auto base = subset_by_labels(data, base_labels);
  const auto novel = subset_by_labels(data, novel_labels);
  const auto report = evaluate(ck, base, novel, topology, c.eval);
  if (c.output.has_parent_path()) fs::create_directories(c.output.parent_path());
  save_report(report, c.output);
  out << report.classifier << " accuracy " << std::setprecision(6) << report.accuracy << " (" << report.correct << "/"
      << report.total << ")\n";
  return 0;
}

// sweep-jid -----------------------------------------------------------------

int cmd_sweep_jid(RunConfig& c, std::ostream& out) {
  require_output(c.output);
  require_file(c.data, "dataset");
  c.model.encoder.blocks = 9;
  std::ostringstream table;
  table << "n_pre,seed,accuracy\n";
  std::vector<RunConfig> runs;
  for (int n_pre : {3, 5, 7, 9}) {
    RunConfig r = c;
    r.model.encoder.pre_blocks = n_pre;
    r.model.validate();
    runs.push_back(r);
  }
  c.eval.dc.validate();
  for (auto& r : runs) {
    auto prepared = prepare_training(r);
    const auto ck = train(r.model, prepared.set);
    const auto data = load_dataset(r.data, prepared.topology);
    const auto [base_labels, novel_labels] = class_partition(r, data);
    const auto report = evaluate(ck, prepared.base, subset_by_labels(data, novel_labels), prepared.topology, r.eval);
    table << r.model.encoder.pre_blocks << "," << r.model.seed << "," << std::setprecision(10) << report.accuracy
          << "\n";
    out << "n_pre " << r.model.encoder.pre_blocks << " accuracy " << report.accuracy << "\n";
  }
  write_text_file(c.output, table.str());
  return 0;
}

// viz -----------------------------------------------------------------------

std::string safe_file_name(const std::string& id) {
  std::string s = id;
  for (char& ch : s) {
    if (!(std::isalnum(static_cast<unsigned char>(ch)) || ch == '-' || ch == '_' || ch == '.')) ch = '_';
  }
  return s;
}

int cmd_viz(RunConfig& c, const std::string& samples, int count, std::ostream& out) {
  require_file(c.checkpoint, "checkpoint");
  require_file(c.data, "dataset");
  require_output(c.output);
  if (samples.empty() && count < 1) throw UsageError("--samples or --count >= 1 is required");
  const auto ck = load_checkpoint(c.checkpoint);
  const auto topology = load_topology(ck.config.topology);
  const auto data = load_dataset(c.data, topology);

  std::vector<const SkeletonSequence*> chosen;
  if (!samples.empty()) {
    std::stringstream ss(samples);
    std::string id;
    while (std::getline(ss, id, ',')) {
      const auto it = std::find_if(data.sequences.begin(), data.sequences.end(),
                                   [&](const SkeletonSequence& s) { return s.id == id; });
      if (it == data.sequences.end()) throw DataError("unknown sample id '" + id + "'");
      chosen.push_back(&*it);
    }
  } else {
    for (int i = 0; i < count && i < int(data.size()); ++i) chosen.push_back(&data.sequences[std::size_t(i)]);
  }

  const auto model = model_from_checkpoint(ck);
  std::map<std::string, std::string> files;
  std::ostringstream k_table;
  k_table << "id";
  for (int v = 0; v < topology.joint_count(); ++v) k_table << ",k_" << v;
  k_table << "\n" << std::setprecision(17);
  for (const auto* seq : chosen) {
    const auto encoded = model.encode(prepare_frames(*seq, topology, ck.config.encoder.frames));
    const auto report = export_attention(encoded);
    files[safe_file_name(seq->id) + "_attention.csv"] = attention_report_csv(report);
    k_table << seq->id;
    for (Eigen::Index v = 0; v < report.k_out.size(); ++v) k_table << "," << report.k_out[v];
    k_table << "\n";
  }
  fs::create_directories(c.output);
  for (const auto& [name, content] : files) write_text_file(c.output / name, content);
  write_text_file(c.output / "k_out.csv", k_table.str());
  out << "wrote " << files.size() << " attention reports to " << c.output.string() << "\n";
  return 0;
}

std::string one_line(std::string s) {
  for (char& ch : s) {
    if (ch == '\n' || ch == '\r') ch = ' ';
    if (ch == '"') ch = '\'';
  }
  return s;
}

void report_error(std::ostream& err, const char* code, const std::string& message) {
  err << "error code=" << code << " message=\"" << one_line(message) << "\"\n";
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Text-guided one-shot skeleton action recognition"};
  app.require_subcommand(1);
  Overrides o;
  app.add_option("--config", o.config, "JSON run config; flags override it");
  app.add_option("--seed", o.seed, "seed for data generation, training and episodes");

  auto* gen = app.add_subcommand("gen-data", "generate the synthetic dataset and its descriptions");
  GenFlags g;
  gen->add_option("--out", o.output, "output directory");
  gen->add_option("--classes", g.classes);
  gen->add_option("--per-class", g.per_class);
  gen->add_option("--frames", g.frames);
  gen->add_option("--noise", g.noise);
  gen->add_option("--distractor", g.distractor);
  gen->add_flag("--binary", g.binary, "write the binary dataset format");

  auto* extract = app.add_subcommand("extract", "key-joint distributions from global descriptions");
  extract->add_option("--descriptions", o.descriptions);
  extract->add_option("--out", o.output, "output .jsonl");

  auto* embed = app.add_subcommand("embed-text", "embed per-joint descriptions");
  std::optional<int> dim;
  embed->add_option("--descriptions", o.descriptions);
  embed->add_option("--embedder", o.embedder);
  embed->add_option("--dim", dim);
  embed->add_option("--out", o.output, "output manifest (.json)");

  auto* train_cmd = app.add_subcommand("train", "train a checkpoint on the base classes");
  bool resume = false;
  std::optional<int> stop_after;
  add_path_flags(train_cmd, o);
  add_model_flags(train_cmd, o);
  train_cmd->add_option("--out", o.output, "checkpoint directory");
  train_cmd->add_option("--checkpoint", o.checkpoint, "checkpoint to resume with --resume");
  train_cmd->add_flag("--resume", resume);
  train_cmd->add_option("--stop-after", stop_after, "stop after this many completed epochs");

  auto* eval_cmd = app.add_subcommand("eval", "one-shot evaluation on the novel classes");
  add_path_flags(eval_cmd, o);
  add_eval_flags(eval_cmd, o);
  eval_cmd->add_option("--checkpoint", o.checkpoint);
  eval_cmd->add_option("--threads", o.threads);
  eval_cmd->add_option("--out", o.output, "report file (.json)");

  auto* sweep = app.add_subcommand("sweep-jid", "accuracy against the importance-head position");
  add_path_flags(sweep, o);
  add_model_flags(sweep, o);
  add_eval_flags(sweep, o);
  sweep->add_option("--out", o.output, "table file (.csv)");

  auto* viz = app.add_subcommand("viz", "export spatial attention and joint importance");
  std::string samples;
  int count = 0;
  viz->add_option("--checkpoint", o.checkpoint);
  viz->add_option("--data", o.data);
  viz->add_option("--samples", samples, "comma-separated sample ids");
  viz->add_option("--count", count, "first N samples");
  viz->add_option("--out", o.output, "output directory");

  try {
    try {
      app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
      out << app.help();
      return 0;
    } catch (const CLI::CallForAllHelp&) {
      out << app.help("", CLI::AppFormatMode::All);
      return 0;
    } catch (const CLI::ParseError& e) {
      throw UsageError(e.what());
    }
    RunConfig c = build_config(o);
    if (c.eval.threads < 1) throw ConfigError("threads must be >= 1");
    if (gen->parsed()) return cmd_gen_data(c, g, out);
    if (extract->parsed()) return cmd_extract(c, out, err);
    if (embed->parsed()) return cmd_embed_text(c, dim, out);
    if (train_cmd->parsed()) return cmd_train(c, resume, stop_after, out);
    if (eval_cmd->parsed()) return cmd_eval(c, out);
    if (sweep->parsed()) return cmd_sweep_jid(c, out);
    if (viz->parsed()) return cmd_viz(c, samples, count, out);
    throw UsageError("no command");
  } catch (const UsageError& e) {
    report_error(err, "usage", e.what());
    return kExitUsage;
  } catch (const ConfigError& e) {
    report_error(err, "config", e.what());
    return kExitConfig;
  } catch (const DataError& e) {
    report_error(err, "data", e.what());
    return kExitData;
  } catch (const TextError& e) {
    report_error(err, "text", e.what());
    return kExitText;
  } catch (const std::invalid_argument& e) {
    report_error(err, "config", e.what());
    return kExitConfig;
  } catch (const std::exception& e) {
    report_error(err, "internal", e.what());
    return kExitOther;
  }
}

}  // namespace crossglg
