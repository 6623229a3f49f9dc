#include "gdmd/pipeline.hpp"

#include "gdmd/gdmd.hpp"
#include "gdmd/io.hpp"
#include "gdmd_schemas.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

namespace gdmd::pipeline {

namespace {

json parse_schema(const char* text) { return json::parse(text); }

// ---- schema validation ---------------------------------------------------

bool is_integral(const json& v) {
  if (v.is_number_integer()) return true;
  if (!v.is_number_float()) return false;
  const double d = v.get<double>();
  return std::isfinite(d) && std::floor(d) == d;
}

bool type_matches(const json& v, const std::string& t) {
  if (t == "object") return v.is_object();
  if (t == "array") return v.is_array();
  if (t == "string") return v.is_string();
  if (t == "boolean") return v.is_boolean();
  if (t == "null") return v.is_null();
  if (t == "integer") return is_integral(v);
  if (t == "number") return v.is_number();
  return false;
}

const json& resolve(const json& schema, const json& root) {
  if (!schema.contains("$ref")) return schema;
  const std::string ref = schema.at("$ref").get<std::string>();
  if (ref.rfind("#/", 0) != 0) throw Error(ErrorCode::Config, "unsupported schema reference " + ref);
  return root.at(json::json_pointer(ref.substr(1)));
}

void check(const json& value, const json& raw_schema, const std::string& where, const json& root,
           std::vector<std::string>& errors) {
  const json& schema = resolve(raw_schema, root);
  if (schema.contains("type")) {
    const json& t = schema.at("type");
    bool ok = false;
    if (t.is_string()) ok = type_matches(value, t.get<std::string>());
    else
      for (const auto& alt : t) ok = ok || type_matches(value, alt.get<std::string>());
    if (!ok) {
      errors.push_back(where + ": expected " + t.dump() + ", got " + value.dump());
      return;
    }
  }
  if (schema.contains("enum")) {
    const json& options = schema.at("enum");
    if (std::find(options.begin(), options.end(), value) == options.end()) {
      errors.push_back(where + ": " + value.dump() + " is not one of " + options.dump());
      return;
    }
  }
  if (value.is_number()) {
    const double d = value.get<double>();
    if (schema.contains("minimum") && d < schema.at("minimum").get<double>())
      errors.push_back(where + ": " + value.dump() + " is below the minimum " + schema.at("minimum").dump());
    if (schema.contains("maximum") && d > schema.at("maximum").get<double>())
      errors.push_back(where + ": " + value.dump() + " is above the maximum " + schema.at("maximum").dump());
    if (schema.contains("exclusiveMinimum") && !(d > schema.at("exclusiveMinimum").get<double>()))
      errors.push_back(where + ": " + value.dump() + " must exceed " + schema.at("exclusiveMinimum").dump());
  }
  if (value.is_array()) {
    if (schema.contains("minItems") && value.size() < schema.at("minItems").get<std::size_t>())
      errors.push_back(where + ": needs at least " + schema.at("minItems").dump() + " items");
    if (schema.contains("maxItems") && value.size() > schema.at("maxItems").get<std::size_t>())
      errors.push_back(where + ": allows at most " + schema.at("maxItems").dump() + " items");
    if (schema.contains("items"))
      for (std::size_t i = 0; i < value.size(); ++i)
        check(value[i], schema.at("items"), where + "[" + std::to_string(i) + "]", root, errors);
  }
  if (value.is_object()) {
    const json empty = json::object();
    const json& props = schema.contains("properties") ? schema.at("properties") : empty;
    if (schema.contains("required"))
      for (const auto& r : schema.at("required"))
        if (!value.contains(r.get<std::string>())) errors.push_back(where + ": missing key '" + r.get<std::string>() + "'");
    const bool closed = schema.contains("additionalProperties") && !schema.at("additionalProperties").get<bool>();
    for (const auto& [key, v] : value.items()) {
      if (props.contains(key)) check(v, props.at(key), where + "." + key, root, errors);
      else if (closed) errors.push_back(where + ": unknown key '" + key + "'");
    }
  }
}

void fill_defaults(json& value, const json& schema) {
  if (!value.is_object() || !schema.contains("properties")) return;
  for (const auto& [key, sub] : schema.at("properties").items()) {
    if (!value.contains(key) && sub.contains("default")) value[key] = sub.at("default");
    if (!value.contains(key)) continue;
    json& v = value[key];
    const json& t = sub.contains("type") ? sub.at("type") : json();
    if (t == "integer" && v.is_number_float()) v = static_cast<std::int64_t>(v.get<double>());
    if (t == "array" && sub.contains("items") && sub.at("items").value("type", "") == "integer")
      for (auto& item : v)
        if (item.is_number_float()) item = static_cast<std::int64_t>(item.get<double>());
    fill_defaults(v, sub);
  }
}

void semantic_checks(const json& cfg, std::vector<std::string>& errors) {
  const auto& in = cfg.at("input");
  if (!in.at("subjects").empty() && in.at("subjects").size() != in.at("bold").size())
    errors.push_back("$.input.subjects: must be empty or match input.bold in length");
  const auto& gd = cfg.at("graph_dmd");
  if (!(gd.at("growth_min").get<double>() < gd.at("growth_max").get<double>()))
    errors.push_back("$.graph_dmd: growth_min must be below growth_max");
  if (gd.at("window").get<int>() == 1 || gd.at("window").get<int>() == 2)
    errors.push_back("$.graph_dmd.window: must be 0 (whole sequence) or >= 3");
  const auto& edges = cfg.at("postprocess").at("bin_edges");
  if (edges.at(0).get<double>() != 0.0) errors.push_back("$.postprocess.bin_edges: must start at 0");
  for (std::size_t i = 1; i < edges.size(); ++i)
    if (!(edges[i].get<double>() > edges[i - 1].get<double>()))
      errors.push_back("$.postprocess.bin_edges: must increase strictly");
  for (const auto& b : cfg.at("regress").at("bands"))
    if (!(b[0].get<double>() < b[1].get<double>())) errors.push_back("$.regress.bands: each band needs lo < hi");
}

// ---- helpers -------------------------------------------------------------

std::string num(double v) { return io::format_double(v); }

std::string numbered(const std::string& prefix, std::size_t k, int width = 3) {
  std::string s = std::to_string(k);
  if (static_cast<int>(s.size()) < width) s.insert(0, static_cast<std::size_t>(width) - s.size(), '0');
  return prefix + s;
}

void write_json(const fs::path& path, const json& j) { io::write_text(path, j.dump(2) + "\n"); }

json read_json(const fs::path& path) {
  try {
    return json::parse(io::read_text(path));
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::Io, "cannot parse " + path.string() + ": " + e.what());
  }
}

int workers(const json& cfg) { return cfg.at("workers").get<int>(); }

/// Runs fn(i) for i in [0, count) on up to `threads` threads; the first
/// failure in index order is rethrown after all workers finish.
template <class Fn>
void parallel_for(std::size_t count, int threads, Fn fn) {
  std::vector<std::exception_ptr> errors(count);
  if (threads <= 1 || count <= 1) {
    for (std::size_t i = 0; i < count; ++i) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  } else {
    std::mutex mu;
    std::size_t next = 0;
    auto worker = [&] {
      for (;;) {
        std::size_t i;
        {
          std::lock_guard<std::mutex> lock(mu);
          if (next >= count) return;
          i = next++;
        }
        try {
          fn(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    };
    std::vector<std::thread> pool;
    const auto n = std::min<std::size_t>(static_cast<std::size_t>(threads), count);
    for (std::size_t t = 0; t < n; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

struct Subject {
  std::string id;
  fs::path path;
};

std::vector<Subject> subjects(const json& cfg) {
  const auto& in = cfg.at("input");
  const auto bold = in.at("bold").get<std::vector<std::string>>();
  if (bold.empty()) throw Error(ErrorCode::Config, "input.bold lists no files");
  auto ids = in.at("subjects").get<std::vector<std::string>>();
  std::vector<Subject> out;
  std::set<std::string> seen;
  for (std::size_t i = 0; i < bold.size(); ++i) {
    Subject s{ids.empty() ? fs::path(bold[i]).stem().string() : ids[i], bold[i]};
    if (!seen.insert(s.id).second) throw Error(ErrorCode::Config, "duplicate subject id '" + s.id + "'");
    out.push_back(s);
  }
  return out;
}

WindowSpec window_spec(const json& cfg) {
  return {cfg.at("dnfc").at("window").get<int>(), cfg.at("dnfc").at("stride").get<int>()};
}

GraphDmdOptions dmd_options(const json& cfg) {
  const auto& g = cfg.at("graph_dmd");
  GraphDmdOptions o;
  const int rank = g.at("rank").get<int>();
  o.rank = rank > 0 ? RankPolicy::fixed(rank) : RankPolicy::energy(g.at("tau").get<double>());
  const int q = g.at("projection").get<int>();
  o.projection = q > 0 ? Projection::node_space(q) : Projection::none();
  o.amplitudes = g.at("amplitudes") == "projection" ? AmplitudeMethod::Projection : AmplitudeMethod::LeastSquares;
  o.drop_conjugates = g.at("drop_conjugates").get<bool>();
  return o;
}

TrainConfig train_config(const json& cfg, std::uint64_t seed) {
  const auto& k = cfg.at("koopman");
  TrainConfig t;
  t.alpha = k.at("alpha").get<double>();
  t.beta = k.at("beta").get<double>();
  t.learning_rate = k.at("learning_rate").get<double>();
  t.momentum = k.at("momentum").get<double>();
  t.epochs = k.at("epochs").get<int>();
  t.batch_windows = k.at("batch_windows").get<int>();
  t.ridge = k.at("ridge").get<double>();
  t.validation_fraction = k.at("validation_fraction").get<double>();
  t.clip_norm = k.at("clip_norm").get<double>();
  t.hidden = k.at("hidden").get<std::vector<int>>();
  t.latent = k.at("latent").get<int>();
  t.activation = k.at("activation") == "identity" ? Activation::Identity : Activation::Tanh;
  t.seed = seed;
  t.validate();
  return t;
}

KMeansOptions kmeans_options(const json& cfg) {
  const auto& p = cfg.at("postprocess");
  return {p.at("restarts").get<int>(), p.at("max_iter").get<int>(), stage_seed(cfg, Stream::Cluster)};
}

json warnings_json(const Warnings& w) { return json(w); }

/// Modes of one subject: windowed when graph_dmd.window > 0, otherwise over
/// the whole sequence.
std::vector<DynamicMode> decompose_sequence(const json& cfg, const GraphSequence& gs, std::size_t* filtered) {
  const auto& g = cfg.at("graph_dmd");
  const int window = g.at("window").get<int>();
  if (window == 0) return graph_dmd(gs, dmd_options(cfg));
  WindowedOptions w;
  w.window = window;
  w.step = g.at("step").get<int>();
  w.dmd = dmd_options(cfg);
  w.growth_min = g.at("growth_min").get<double>();
  w.growth_max = g.at("growth_max").get<double>();
  const auto set = windowed_graph_dmd(gs, w);
  if (filtered) *filtered = set.filtered;
  return set.flatten();
}

void write_validated_modes(const fs::path& dir, const std::vector<DynamicMode>& modes) {
  io::write_modes(dir, modes);
  for (std::size_t k = 0; k < modes.size(); ++k) {
    const fs::path sidecar = dir / (numbered("mode_", k, 5) + ".json");
    const auto errors = validate(read_json(sidecar), mode_schema());
    if (!errors.empty()) throw Error(ErrorCode::Io, "mode sidecar fails its schema: " + errors.front());
  }
}

/// Bins, per-subject representatives and cross-subject alignment.
ModeAtlas build_atlas(const json& cfg, const std::vector<std::string>& ids,
                      const std::vector<std::vector<DynamicMode>>& modes, int n, json& report) {
  const auto edges = cfg.at("postprocess").at("bin_edges").get<std::vector<double>>();
  const int k = cfg.at("postprocess").at("k").get<int>();
  const KMeansOptions opts = kmeans_options(cfg);
  std::vector<std::vector<BinRepresentatives>> reps(ids.size());
  std::vector<json> per(ids.size());
  parallel_for(ids.size(), workers(cfg), [&](std::size_t s) {
    const Binning b = bin_by_frequency(modes[s], edges);
    reps[s] = representatives(b.bins, k, opts);
    json counts = json::array();
    for (const auto& bin : b.bins) counts.push_back(bin.members.size());
    per[s] = {{"subject", ids[s]}, {"bin_counts", counts}, {"dropped", b.dropped}};
  });
  report["subjects"] = per;

  // Silhouette sweep on the pooled representatives of every oscillatory bin.
  json sweeps = json::array();
  for (std::size_t b = 1; b + 1 < edges.size(); ++b) {
    std::vector<Vec> pooled;
    for (const auto& r : reps)
      for (const auto& v : r[b].modes) pooled.push_back(v);
    const int kmax = std::min<int>(6, static_cast<int>(pooled.size()) - 1);
    if (kmax < 2) continue;
    const auto scores = silhouette_sweep(pooled, 2, kmax, opts);
    for (std::size_t i = 0; i < scores.size(); ++i)
      sweeps.push_back({{"f_lo", edges[b]}, {"f_hi", edges[b + 1]}, {"k", 2 + static_cast<int>(i)}, {"silhouette", scores[i]}});
  }
  report["silhouette"] = sweeps;
  return align_subjects(reps, n, k, opts, ids);
}

void write_silhouette_csv(const fs::path& path, const json& sweeps) {
  std::string out = "f_lo,f_hi,k,silhouette\n";
  for (const auto& s : sweeps)
    out += num(s.at("f_lo").get<double>()) + "," + num(s.at("f_hi").get<double>()) + "," +
           std::to_string(s.at("k").get<int>()) + "," + num(s.at("silhouette").get<double>()) + "\n";
  io::write_text(path, out);
}

}  // namespace

// ---- configuration ---------------------------------------------------------

const json& config_schema() {
  static const json s = parse_schema(schemas::kConfig);
  return s;
}

const json& mode_schema() {
  static const json s = parse_schema(schemas::kMode);
  return s;
}

static const json& report_schema() {
  static const json s = parse_schema(schemas::kReport);
  return s;
}

std::vector<std::string> validate(const json& value, const json& schema, const std::string& where) {
  std::vector<std::string> errors;
  check(value, schema, where, schema, errors);
  return errors;
}

json canonicalize(const json& raw) {
  auto errors = validate(raw, config_schema());
  if (errors.empty()) {
    json cfg = raw;
    fill_defaults(cfg, config_schema());
    semantic_checks(cfg, errors);
    if (errors.empty()) return cfg;
  }
  std::string msg = "invalid configuration:";
  for (const auto& e : errors) msg += " " + e + ";";
  msg.pop_back();
  throw Error(ErrorCode::Config, msg);
}

std::string serialize(const json& cfg) { return cfg.dump(2) + "\n"; }

json load_config(const fs::path& path) {
  if (path.empty()) return canonicalize(json::object());
  std::string text;
  try {
    text = io::read_text(path);
  } catch (const Error& e) {
    throw Error(ErrorCode::Config, e.what());
  }
  json raw;
  try {
    raw = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::Config, "config is not valid JSON: " + std::string(e.what()));
  }
  return canonicalize(raw);
}

void apply_env_overrides(json& cfg) {
  auto parse = [](const char* name, std::int64_t min) -> std::optional<std::int64_t> {
    const char* v = std::getenv(name);
    if (!v) return std::nullopt;
    std::size_t used = 0;
    std::int64_t x = 0;
    try {
      x = std::stoll(v, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || v[used] != '\0' || x < min)
      throw Error(ErrorCode::Config, std::string(name) + " must be an integer >= " + std::to_string(min));
    return x;
  };
  if (auto s = parse("GDMD_SEED", 0)) cfg["seed"] = *s;
  if (auto w = parse("GDMD_WORKERS", 1)) cfg["workers"] = *w;
}

std::uint64_t stage_seed(const json& cfg, Stream stream) {
  return derive_seed(cfg.at("seed").get<std::uint64_t>(), static_cast<std::uint64_t>(stream));
}

// ---- commands --------------------------------------------------------------

void cmd_simulate(const json& cfg, const fs::path& out, Context& ctx) {
  ctx.stage = "simulate";
  const auto& s = cfg.at("simulate");
  const int runs = s.at("runs").get<int>();
  const std::uint64_t root = stage_seed(cfg, Stream::Simulate);
  const std::uint64_t ica_root = stage_seed(cfg, Stream::Ica);
  const GraphDmdOptions opts = dmd_options(cfg);

  struct RunResult {
    std::uint64_t seed = 0;
    double pca = 0, ica = 0, dmd = 0;
    json truth;
  };
  std::vector<RunResult> results(static_cast<std::size_t>(runs));
  std::mutex stage_mu;
  auto set_stage = [&](const char* name) {
    std::lock_guard<std::mutex> lock(stage_mu);
    ctx.stage = name;
  };

  parallel_for(results.size(), workers(cfg), [&](std::size_t r) {
    RunResult& res = results[r];
    SimulationSpec spec = SimulationSpec::standard(derive_seed(root, r));
    spec.n = s.at("n").get<int>();
    spec.steps = s.at("steps").get<int>();
    spec.dt = s.at("dt").get<double>();
    res.seed = spec.seed;
    set_stage("simulate");
    const Simulation sim = simulate_sequence(spec);
    const int n = spec.n;

    set_stage("baselines");
    Mat g(static_cast<Eigen::Index>(sim.sequence.size()), static_cast<Eigen::Index>(n) * n);
    for (std::size_t k = 0; k < sim.sequence.size(); ++k)
      g.row(static_cast<Eigen::Index>(k)) = vectorize(sim.sequence.graphs[k]).transpose();
    const int comps = static_cast<int>(sim.truth.size());
    const PcaResult p = pca(g, comps);
    std::vector<Mat> pca_maps, ica_maps;
    for (int c = 0; c < comps; ++c) pca_maps.push_back(devectorize(Vec(p.components.row(c).transpose()), n));
    IcaOptions io_opts;
    io_opts.seed = derive_seed(ica_root, r);
    const IcaResult ica = fast_ica(g, comps, io_opts);
    for (int c = 0; c < comps; ++c) ica_maps.push_back(devectorize(Vec(ica.mixing.col(c)), n));
    res.pca = mean(recovery_scores(pca_maps, sim.truth));
    res.ica = mean(recovery_scores(ica_maps, sim.truth));

    set_stage("graph_dmd");
    res.dmd = mean(mode_recovery_score(graph_dmd(sim.sequence, opts), sim.truth));

    json modes = json::array();
    for (std::size_t p_i = 0; p_i < spec.modes.size(); ++p_i)
      modes.push_back({{"blocks", spec.modes[p_i].blocks},
                       {"growth", spec.modes[p_i].growth},
                       {"freq_hz", sim.freq_hz[p_i]},
                       {"amplitude", spec.modes[p_i].amplitude}});
    res.truth = {{"run", r}, {"seed", spec.seed}, {"n", n}, {"steps", spec.steps}, {"dt", spec.dt}, {"modes", modes}};
    if (s.at("write_sequences").get<bool>()) {
      const fs::path dir = out / "runs" / numbered("run_", r);
      io::write_graph_sequence(dir / "graphs", sim.sequence);
      for (std::size_t p_i = 0; p_i < sim.truth.size(); ++p_i)
        io::write_matrix_csv(dir / ("truth_mode_" + std::to_string(p_i) + ".csv"), sim.truth[p_i]);
      write_json(dir / "truth.json", res.truth);
    }
  });

  ctx.stage = "report";
  std::vector<double> pca_s, ica_s, dmd_s;
  std::string per_run = "run,seed,PCA,ICA,GraphDMD\n";
  json truth = json::array();
  for (std::size_t r = 0; r < results.size(); ++r) {
    const auto& res = results[r];
    pca_s.push_back(res.pca);
    ica_s.push_back(res.ica);
    dmd_s.push_back(res.dmd);
    per_run += std::to_string(r) + "," + std::to_string(res.seed) + "," + num(res.pca) + "," + num(res.ica) + "," +
               num(res.dmd) + "\n";
    truth.push_back(res.truth);
  }
  std::string table = "method,mean,std\n";
  table += "PCA," + num(mean(pca_s)) + "," + num(stddev(pca_s)) + "\n";
  table += "ICA," + num(mean(ica_s)) + "," + num(stddev(ica_s)) + "\n";
  table += "GraphDMD," + num(mean(dmd_s)) + "," + num(stddev(dmd_s)) + "\n";
  io::write_text(out / "comparison.csv", table);
  io::write_text(out / "runs.csv", per_run);
  write_json(out / "truth.json", truth);
}

void cmd_dnfc(const json& cfg, const fs::path& out, Context& ctx) {
  ctx.stage = "dnfc";
  const auto subs = subjects(cfg);
  const double dt = cfg.at("input").at("dt").get<double>();
  const WindowSpec w = window_spec(cfg);
  std::vector<json> summary(subs.size());
  parallel_for(subs.size(), workers(cfg), [&](std::size_t i) {
    const BoldSeries x = io::read_bold(subs[i].path, dt);
    Warnings warn;
    const GraphSequence gs = sliding_window_correlation(x, w, &warn);
    io::write_graph_sequence(out / "subjects" / subs[i].id / "graphs", gs);
    summary[i] = {{"subject", subs[i].id}, {"graphs", gs.size()}, {"n", gs.n}, {"dt_eff", gs.dt_eff},
                  {"warnings", warnings_json(warn)}};
  });
  write_json(out / "subjects.json", summary);
}

void cmd_train_koopman(const json& cfg, const fs::path& out, Context& ctx) {
  ctx.stage = "train-koopman";
  const auto subs = subjects(cfg);
  const double dt = cfg.at("input").at("dt").get<double>();
  const WindowSpec w = window_spec(cfg);
  const std::uint64_t root = stage_seed(cfg, Stream::Koopman);
  std::vector<json> summary(subs.size());
  parallel_for(subs.size(), workers(cfg), [&](std::size_t i) {
    const BoldSeries x = io::read_bold(subs[i].path, dt);
    const TrainConfig tc = train_config(cfg, derive_seed(root, i));
    const TrainResult res = train(x, w, tc);
    io::save_model(out / "models" / (subs[i].id + ".ckpt"), res.model, tc);
    io::write_training_log(out / "models" / (subs[i].id + "_log.csv"), res.log);
    const auto& best = res.log[static_cast<std::size_t>(res.best_epoch)];
    summary[i] = {{"subject", subs[i].id},
                  {"best_epoch", res.best_epoch},
                  {"train_windows", res.train_windows},
                  {"validation_windows", res.validation_windows},
                  {"validation_loss", best.validation.total}};
  });
  write_json(out / "models" / "models.json", summary);
}

void cmd_decompose(const json& cfg, const fs::path& out, Context& ctx) {
  ctx.stage = "decompose";
  const auto subs = subjects(cfg);
  const double dt = cfg.at("input").at("dt").get<double>();
  const WindowSpec w = window_spec(cfg);
  const bool deep = cfg.at("decompose").at("path") == "deep";
  const std::string model_source = cfg.at("decompose").at("model").get<std::string>();
  const std::uint64_t root = stage_seed(cfg, Stream::Koopman);
  if (deep && model_source == "load" && cfg.at("input").at("models").is_null())
    throw Error(ErrorCode::Config, "decompose.model = load needs input.models");

  std::vector<std::vector<DynamicMode>> modes(subs.size());
  std::vector<json> summary(subs.size());
  std::vector<int> sizes(subs.size());
  parallel_for(subs.size(), workers(cfg), [&](std::size_t i) {
    const BoldSeries x = io::read_bold(subs[i].path, dt);
    const fs::path dir = out / "subjects" / subs[i].id;
    Warnings warn;
    GraphSequence gs;
    if (!deep) {
      gs = sliding_window_correlation(x, w, &warn);
    } else {
      KoopmanModel model;
      if (model_source == "identity") {
        model = KoopmanModel::identity(w.length);
      } else if (model_source == "load") {
        model = io::load_model(fs::path(cfg.at("input").at("models").get<std::string>()) / (subs[i].id + ".ckpt"));
      } else {
        const TrainConfig tc = train_config(cfg, derive_seed(root, i));
        const TrainResult res = train(x, w, tc);
        model = res.model;
        io::save_model(dir / "model.ckpt", model, tc);
        io::write_training_log(dir / "training_log.csv", res.log);
      }
      if (model.window != w.length)
        throw Error(ErrorCode::ShapeMismatch, "model window differs from dnfc.window for subject " + subs[i].id);
      gs = latent_sequence(model, x, w, &warn);
    }
    std::size_t filtered = 0;
    modes[i] = decompose_sequence(cfg, gs, &filtered);
    write_validated_modes(dir / "modes", modes[i]);
    sizes[i] = gs.n;
    summary[i] = {{"subject", subs[i].id}, {"graphs", gs.size()}, {"modes", modes[i].size()},
                  {"filtered", filtered}, {"warnings", warnings_json(warn)}};
  });
  for (int s : sizes)
    if (s != sizes.front()) throw Error(ErrorCode::ShapeMismatch, "subjects have different node counts");

  write_json(out / "subjects.json", summary);
  if (subs.size() < 2) {
    write_json(out / "postprocess.json", json{{"atlas", nullptr}, {"note", "a cohort atlas needs at least two subjects"}});
    return;
  }
  ctx.stage = "postprocess";
  std::vector<std::string> ids;
  for (const auto& s : subs) ids.push_back(s.id);
  json report;
  const ModeAtlas atlas = build_atlas(cfg, ids, modes, sizes.front(), report);
  io::write_atlas(out / "atlas", atlas);
  write_silhouette_csv(out / "silhouette.csv", report.at("silhouette"));
  write_json(out / "postprocess.json", report);
}

void cmd_postprocess(const json& cfg, const fs::path& out, Context& ctx) {
  ctx.stage = "postprocess";
  const auto& src = cfg.at("input").at("modes");
  if (src.is_null()) throw Error(ErrorCode::Config, "postprocess needs input.modes (a decompose output directory)");
  const fs::path root = src.get<std::string>();
  const json listing = read_json(root / "subjects.json");
  std::vector<std::string> ids;
  for (const auto& s : listing) ids.push_back(s.at("subject").get<std::string>());
  if (ids.empty()) throw Error(ErrorCode::Io, "no subjects listed in " + (root / "subjects.json").string());
  std::vector<std::vector<DynamicMode>> modes(ids.size());
  parallel_for(ids.size(), workers(cfg), [&](std::size_t i) { modes[i] = io::read_modes(root / "subjects" / ids[i] / "modes"); });
  int n = 0;
  for (const auto& m : modes)
    if (!m.empty()) n = static_cast<int>(m.front().phi.rows());
  if (n == 0) throw Error(ErrorCode::Io, "no modes found under " + root.string());
  json report;
  const ModeAtlas atlas = build_atlas(cfg, ids, modes, n, report);
  io::write_atlas(out / "atlas", atlas);
  write_silhouette_csv(out / "silhouette.csv", report.at("silhouette"));
  write_json(out / "postprocess.json", report);
}

void cmd_regress(const json& cfg, const fs::path& out, Context& ctx) {
  ctx.stage = "regress";
  const auto& in = cfg.at("input");
  if (in.at("atlas").is_null() || in.at("scores").is_null())
    throw Error(ErrorCode::Config, "regress needs input.atlas and input.scores");
  const ModeAtlas atlas = io::read_atlas(in.at("atlas").get<std::string>());
  const io::ScoreTable table = io::read_score_table(in.at("scores").get<std::string>());
  const auto& r = cfg.at("regress");

  // Score rows in atlas subject order.
  std::vector<Eigen::Index> rows;
  for (const auto& id : atlas.subjects) {
    const auto it = std::find(table.subjects.begin(), table.subjects.end(), id);
    if (it == table.subjects.end()) throw Error(ErrorCode::InvalidArgument, "subject '" + id + "' has no scores");
    rows.push_back(it - table.subjects.begin());
  }
  auto take = [&](const Vec& col) {
    Vec v(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) v(static_cast<Eigen::Index>(i)) = col(rows[i]);
    return v;
  };

  const auto confound_names = r.at("confounds").get<std::vector<std::string>>();
  auto measures = r.at("measures").get<std::vector<std::string>>();
  if (measures.empty())
    for (const auto& c : table.columns)
      if (std::find(confound_names.begin(), confound_names.end(), c) == confound_names.end()) measures.push_back(c);
  if (measures.empty()) throw Error(ErrorCode::Config, "no measures to regress");
  Mat confounds(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(confound_names.size()));
  for (std::size_t c = 0; c < confound_names.size(); ++c)
    confounds.col(static_cast<Eigen::Index>(c)) = take(table.column(confound_names[c]));

  std::vector<Band> bands;
  for (const auto& b : r.at("bands")) bands.push_back({b[0].get<double>(), b[1].get<double>()});
  if (bands.empty())
    for (const auto& b : atlas.bins) bands.push_back({b.f_lo, b.f_hi});

  struct Block {
    std::vector<Band> bands;
    FeatureMatrix features;
  };
  std::vector<Block> single;
  std::vector<Band> usable;
  for (const auto& b : bands) {
    FeatureMatrix f = band_features(atlas, {b});
    if (f.x.cols() == 0) continue;
    usable.push_back(b);
    single.push_back({{b}, std::move(f)});
  }
  if (usable.empty()) throw Error(ErrorCode::InvalidArgument, "no band has any features");
  const Block multi{usable, band_features(atlas, usable)};

  CvOptions base;
  base.folds = r.at("folds").get<int>();
  base.repeats = r.at("repeats").get<int>();
  base.inner_folds = r.at("inner_folds").get<int>();
  base.lambdas = r.at("lambdas").get<std::vector<double>>();
  base.l1_ratios = r.at("l1_ratios").get<std::vector<double>>();
  const std::uint64_t root = stage_seed(cfg, Stream::Regress);

  auto result = [&](const Block& block, const Vec& y, std::uint64_t seed) {
    CvOptions o = base;
    o.seed = seed;
    const CvReport rep = evaluate_r(block.features.x, y, o, workers(cfg));
    json bands_json = json::array();
    for (const auto& b : block.bands) bands_json.push_back({b.f_lo, b.f_hi});
    return json{{"bands", bands_json},       {"columns", block.features.x.cols()}, {"mean_r", rep.mean_r},
                {"std_r", rep.std_r},        {"repeat_r", rep.repeat_r},           {"lambda", rep.chosen_lambda},
                {"l1_ratio", rep.chosen_l1_ratio}};
  };

  json report{{"subjects", rows.size()}, {"confounds", confound_names}, {"measures", json::array()}};
  std::string csv = "measure,bands,columns,mean_r,std_r\n";
  auto band_label = [](const json& bands_json) {
    std::string s;
    for (const auto& b : bands_json) {
      if (!s.empty()) s += "+";
      s += num(b[0].get<double>()) + "-" + num(b[1].get<double>());
    }
    return s;
  };
  for (std::size_t m = 0; m < measures.size(); ++m) {
    Vec y = take(table.column(measures[m]));
    if (confounds.cols() > 0) y = residualize_confounds(y, confounds);
    // The same seed for every feature set keeps the fold splits paired.
    const std::uint64_t seed = derive_seed(root, m);
    json entry{{"name", measures[m]}, {"single_band", json::array()}};
    for (const auto& block : single) entry["single_band"].push_back(result(block, y, seed));
    entry["multi_band"] = result(multi, y, seed);
    for (const auto& row : entry["single_band"])
      csv += measures[m] + "," + band_label(row["bands"]) + "," + std::to_string(row["columns"].get<int>()) + "," +
             num(row["mean_r"].get<double>()) + "," + num(row["std_r"].get<double>()) + "\n";
    csv += measures[m] + ",multi," + std::to_string(entry["multi_band"]["columns"].get<int>()) + "," +
           num(entry["multi_band"]["mean_r"].get<double>()) + "," + num(entry["multi_band"]["std_r"].get<double>()) + "\n";
    report["measures"].push_back(entry);
  }
  const auto errors = validate(report, report_schema());
  if (!errors.empty()) throw Error(ErrorCode::InvalidArgument, "report fails its schema: " + errors.front());
  write_json(out / "report.json", report);
  io::write_text(out / "report.csv", csv);
}

std::string render_svg(const Mat& m, double vmin, double vmax, int cell, const std::string& title) {
  if (!(vmax > vmin)) throw Error(ErrorCode::InvalidArgument, "render: vmax must exceed vmin");
  if (!m.allFinite()) throw Error(ErrorCode::InvalidArgument, "render: matrix has non-finite entries");
  const long w = static_cast<long>(m.cols()) * cell, h = static_cast<long>(m.rows()) * cell;
  auto color = [&](double v) {
    const double t = std::clamp((v - vmin) / (vmax - vmin), 0.0, 1.0);
    // Blue (33,102,172) -> white -> red (178,24,43).
    const double lo[3] = {33, 102, 172}, hi[3] = {178, 24, 43};
    int rgb[3];
    for (int c = 0; c < 3; ++c) {
      const double x = t < 0.5 ? lo[c] + (255 - lo[c]) * (t / 0.5) : 255 + (hi[c] - 255) * ((t - 0.5) / 0.5);
      rgb[c] = static_cast<int>(std::lround(x));
    }
    char buf[8];
    std::snprintf(buf, sizeof buf, "#%02x%02x%02x", rgb[0], rgb[1], rgb[2]);
    return std::string(buf);
  };
  const json meta{{"vmin", vmin}, {"vmax", vmax}, {"rows", m.rows()}, {"cols", m.cols()}, {"title", title}};
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\" viewBox=\"0 0 " << w
    << ' ' << h << "\">\n";
  std::string escaped = meta.dump();
  std::string safe;
  for (char c : escaped) {
    if (c == '<') safe += "&lt;";
    else if (c == '&') safe += "&amp;";
    else safe += c;
  }
  s << "<metadata>" << safe << "</metadata>\n";
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      s << "<rect x=\"" << j * cell << "\" y=\"" << i * cell << "\" width=\"" << cell << "\" height=\"" << cell
        << "\" fill=\"" << color(m(i, j)) << "\"/>\n";
  s << "</svg>\n";
  return s.str();
}

void cmd_render(const json& cfg, const fs::path& out, Context& ctx) {
  ctx.stage = "render";
  const auto& src = cfg.at("input").at("matrix");
  if (src.is_null()) throw Error(ErrorCode::Config, "render needs input.matrix (a CSV file or a mode stem)");
  const fs::path path = src.get<std::string>();
  const auto& r = cfg.at("render");
  Mat m;
  std::string stem = path.stem().string();
  if (path.extension() == ".csv") {
    m = io::read_matrix_csv(path);
  } else {
    stem = path.filename().string();
    const DynamicMode mode = io::read_mode(path.parent_path(), stem);
    const std::string part = r.at("part").get<std::string>();
    m = part == "imag" ? Mat(mode.phi.imag()) : part == "abs" ? Mat(mode.phi.cwiseAbs()) : Mat(mode.phi.real());
  }
  const double peak = m.size() > 0 ? m.cwiseAbs().maxCoeff() : 0.0;
  const double lim = peak > 0.0 ? peak : 1.0;
  const double vmin = r.at("vmin").is_null() ? -lim : r.at("vmin").get<double>();
  const double vmax = r.at("vmax").is_null() ? lim : r.at("vmax").get<double>();
  io::write_text(out / (stem + ".svg"), render_svg(m, vmin, vmax, r.at("cell").get<int>(), stem));
}

const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names{"simulate", "dnfc", "decompose", "train-koopman",
                                              "postprocess", "regress", "render"};
  return names;
}

int run(const std::string& command, const fs::path& config_path, const fs::path& out, std::ostream& err) {
  Context ctx;
  auto report = [&](const std::string& code, const std::string& message) {
    err << json{{"stage", ctx.stage}, {"code", code}, {"message", message}}.dump() << "\n";
  };
  try {
    json cfg = load_config(config_path);
    apply_env_overrides(cfg);
    if (out.empty()) throw Error(ErrorCode::Config, "an output directory is required");
    const auto& names = command_names();
    if (std::find(names.begin(), names.end(), command) == names.end())
      throw Error(ErrorCode::Config, "unknown command '" + command + "'");
    fs::create_directories(out);
    io::write_text(out / "config.json", serialize(cfg));
    if (command == "simulate") cmd_simulate(cfg, out, ctx);
    else if (command == "dnfc") cmd_dnfc(cfg, out, ctx);
    else if (command == "decompose") cmd_decompose(cfg, out, ctx);
    else if (command == "train-koopman") cmd_train_koopman(cfg, out, ctx);
    else if (command == "postprocess") cmd_postprocess(cfg, out, ctx);
    else if (command == "regress") cmd_regress(cfg, out, ctx);
    else cmd_render(cfg, out, ctx);
    return 0;
  } catch (const Error& e) {
    report(to_string(e.code()), e.what());
    return e.code() == ErrorCode::Config ? 2 : 1;
  } catch (const fs::filesystem_error& e) {
    report("Io", e.what());
    return 1;
  } catch (const std::exception& e) {
    report("Internal", e.what());
    return 1;
  }
}

}  // namespace gdmd::pipeline
