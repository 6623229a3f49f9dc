#include "gdmd/io.hpp"

#include <json.hpp>

#include <algorithm>
#include <bit>
#include <cctype>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <sstream>

namespace gdmd::io {

using nlohmann::json;

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorCode::Io, "write failed for " + path.string());
}

namespace {

std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

std::vector<std::vector<std::string>> read_csv(const fs::path& path) {
  std::istringstream in(read_text(path));
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, ',')) cells.push_back(trim(cell));
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    rows.push_back(std::move(cells));
  }
  return rows;
}

double parse_double(const std::string& s, const fs::path& path) {
  if (s.empty()) throw Error(ErrorCode::Io, "empty numeric cell in " + path.string());
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size()) throw Error(ErrorCode::Io, "bad number '" + s + "' in " + path.string());
  return v;
}

std::string lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

std::string join_row(const std::vector<std::string>& cells) {
  std::string out;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) out += ',';
    out += cells[i];
  }
  out += '\n';
  return out;
}

json read_json(const fs::path& path) {
  try {
    return json::parse(read_text(path));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Io, "invalid JSON in " + path.string() + ": " + e.what());
  }
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

}  // namespace

void write_matrix_csv(const fs::path& path, const Mat& m) {
  std::string out;
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j) out += ',';
      out += format_double(m(i, j));
    }
    out += '\n';
  }
  write_text(path, out);
}

Mat read_matrix_csv(const fs::path& path) {
  const auto rows = read_csv(path);
  if (rows.empty()) return Mat(0, 0);
  Mat m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != rows.front().size()) throw Error(ErrorCode::Io, "ragged rows in " + path.string());
    for (std::size_t j = 0; j < rows[i].size(); ++j)
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = parse_double(rows[i][j], path);
  }
  return m;
}

BoldSeries read_bold_csv(const fs::path& path, double dt) {
  auto rows = read_csv(path);
  if (!rows.empty()) {
    const std::string first = lower(rows.front().front());
    if (first.empty() || first == "roi" || first == "label") rows.erase(rows.begin());
  }
  if (rows.empty()) throw Error(ErrorCode::Io, "no data rows in " + path.string());
  const std::size_t width = rows.front().size();
  if (width < 2) throw Error(ErrorCode::Io, "no frames in " + path.string());
  BoldSeries x;
  x.dt = dt;
  x.data.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(width - 1));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != width) throw Error(ErrorCode::Io, "ragged rows in " + path.string());
    x.roi_labels.push_back(rows[i][0]);
    for (std::size_t j = 1; j < width; ++j)
      x.data(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j - 1)) = parse_double(rows[i][j], path);
  }
  x.validate();
  return x;
}

void write_bold_csv(const fs::path& path, const BoldSeries& x) {
  x.validate();
  std::vector<std::string> header{"roi"};
  for (Eigen::Index t = 0; t < x.frames(); ++t) header.push_back(std::to_string(t));
  std::string out = join_row(header);
  for (Eigen::Index i = 0; i < x.rois(); ++i) {
    std::vector<std::string> cells{x.roi_labels[static_cast<std::size_t>(i)]};
    for (Eigen::Index t = 0; t < x.frames(); ++t) cells.push_back(format_double(x.data(i, t)));
    out += join_row(cells);
  }
  write_text(path, out);
}

namespace {

constexpr char kBoldMagic[8] = {'B', 'O', 'L', 'D', 'F', '6', '4', '\0'};

}  // namespace

BoldSeries read_bold_binary(const fs::path& path, double dt) {
  const std::string raw = read_text(path);
  if (raw.size() < 16 || std::memcmp(raw.data(), kBoldMagic, 8) != 0)
    throw Error(ErrorCode::Io, "missing BOLDF64 header in " + path.string());
  std::uint32_t n = 0, t = 0;
  std::memcpy(&n, raw.data() + 8, 4);
  std::memcpy(&t, raw.data() + 12, 4);
  const std::size_t count = static_cast<std::size_t>(n) * t;
  if (raw.size() != 16 + 8 * count) throw Error(ErrorCode::Io, "payload size mismatch in " + path.string());
  BoldSeries x;
  x.dt = dt;
  x.data.resize(n, t);
  for (std::uint32_t i = 0; i < n; ++i)
    for (std::uint32_t j = 0; j < t; ++j) {
      double v;
      std::memcpy(&v, raw.data() + 16 + 8 * (static_cast<std::size_t>(i) * t + j), 8);
      x.data(i, j) = v;
    }
  x.roi_labels = BoldSeries::default_labels(n);
  x.validate();
  return x;
}

void write_bold_binary(const fs::path& path, const BoldSeries& x) {
  x.validate();
  std::string raw(16 + 8 * static_cast<std::size_t>(x.data.size()), '\0');
  std::memcpy(raw.data(), kBoldMagic, 8);
  const auto n = static_cast<std::uint32_t>(x.rois());
  const auto t = static_cast<std::uint32_t>(x.frames());
  std::memcpy(raw.data() + 8, &n, 4);
  std::memcpy(raw.data() + 12, &t, 4);
  for (std::uint32_t i = 0; i < n; ++i)
    for (std::uint32_t j = 0; j < t; ++j) {
      const double v = x.data(i, j);
      std::memcpy(raw.data() + 16 + 8 * (static_cast<std::size_t>(i) * t + j), &v, 8);
    }
  write_text(path, raw);
}

BoldSeries read_bold(const fs::path& path, double dt) {
  if (lower(path.extension().string()) == ".csv") return read_bold_csv(path, dt);
  return read_bold_binary(path, dt);
}

namespace {

std::string numbered(const std::string& prefix, std::size_t k) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%05zu", k);
  return prefix + buf;
}

}  // namespace

void write_graph_sequence(const fs::path& dir, const GraphSequence& gs) {
  fs::create_directories(dir);
  for (std::size_t k = 0; k < gs.size(); ++k) write_matrix_csv(dir / (numbered("graph_", k) + ".csv"), gs.graphs[k]);
  json meta{{"n", gs.n}, {"count", gs.size()}, {"dt_eff", gs.dt_eff}};
  write_json(dir / "meta.json", meta);
}

GraphSequence read_graph_sequence(const fs::path& dir) {
  const json meta = read_json(dir / "meta.json");
  GraphSequence gs;
  try {
    gs.n = meta.at("n").get<int>();
    gs.dt_eff = meta.at("dt_eff").get<double>();
    const auto count = meta.at("count").get<std::size_t>();
    for (std::size_t k = 0; k < count; ++k) {
      Mat g = read_matrix_csv(dir / (numbered("graph_", k) + ".csv"));
      if (g.rows() != gs.n || g.cols() != gs.n) throw Error(ErrorCode::Io, "graph size differs from meta.json");
      gs.graphs.push_back(std::move(g));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Io, std::string("bad meta.json: ") + e.what());
  }
  return gs;
}

void write_mode(const fs::path& dir, const std::string& stem, const DynamicMode& mode) {
  fs::create_directories(dir);
  write_matrix_csv(dir / (stem + "_re.csv"), mode.phi.real());
  write_matrix_csv(dir / (stem + "_im.csv"), mode.phi.imag());
  json j{{"lambda_re", mode.lambda.real()},
         {"lambda_im", mode.lambda.imag()},
         {"growth", mode.growth},
         {"omega", mode.omega},
         {"freq_hz", mode.freq_hz},
         {"window_index", mode.window_index ? json(*mode.window_index) : json(nullptr)},
         {"norm", mode.phi.norm()},
         {"amplitude_re", mode.amplitude.real()},
         {"amplitude_im", mode.amplitude.imag()},
         {"n", mode.phi.rows()}};
  write_json(dir / (stem + ".json"), j);
}

DynamicMode read_mode(const fs::path& dir, const std::string& stem) {
  const Mat re = read_matrix_csv(dir / (stem + "_re.csv"));
  const Mat im = read_matrix_csv(dir / (stem + "_im.csv"));
  if (re.rows() != im.rows() || re.cols() != im.cols() || re.rows() != re.cols())
    throw Error(ErrorCode::Io, "mode CSV pair has mismatched shapes: " + stem);
  const json j = read_json(dir / (stem + ".json"));
  DynamicMode m;
  m.phi = re.cast<Complex>() + Complex(0.0, 1.0) * im.cast<Complex>();
  try {
    m.lambda = Complex(j.at("lambda_re").get<double>(), j.at("lambda_im").get<double>());
    m.growth = j.at("growth").get<double>();
    m.omega = j.value("omega", 0.0);
    m.freq_hz = j.at("freq_hz").get<double>();
    if (!j.at("window_index").is_null()) m.window_index = j.at("window_index").get<int>();
    m.amplitude = Complex(j.value("amplitude_re", 0.0), j.value("amplitude_im", 0.0));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Io, "bad mode sidecar " + stem + ": " + e.what());
  }
  return m;
}

void write_modes(const fs::path& dir, const std::vector<DynamicMode>& modes) {
  fs::create_directories(dir);
  json stems = json::array();
  for (std::size_t k = 0; k < modes.size(); ++k) {
    const std::string stem = numbered("mode_", k);
    write_mode(dir, stem, modes[k]);
    stems.push_back(stem);
  }
  write_json(dir / "index.json", json{{"count", modes.size()}, {"modes", stems}});
}

std::vector<DynamicMode> read_modes(const fs::path& dir) {
  const json idx = read_json(dir / "index.json");
  std::vector<DynamicMode> out;
  try {
    for (const auto& s : idx.at("modes")) out.push_back(read_mode(dir, s.get<std::string>()));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Io, std::string("bad index.json: ") + e.what());
  }
  return out;
}

namespace {

constexpr char kModelMagic[8] = {'G', 'D', 'M', 'D', 'K', 'O', 'O', 'P'};

const char* activation_name(Activation a) { return a == Activation::Tanh ? "tanh" : "identity"; }

Activation parse_activation(const std::string& s) {
  if (s == "tanh") return Activation::Tanh;
  if (s == "identity") return Activation::Identity;
  throw Error(ErrorCode::Io, "unknown activation '" + s + "'");
}

json layers_json(const Mlp& net) {
  json arr = json::array();
  for (const auto& l : net.layers)
    arr.push_back({{"in", l.weight.cols()}, {"out", l.weight.rows()}, {"activation", activation_name(l.activation)}});
  return arr;
}

Mlp layers_from_json(const json& arr) {
  Mlp net;
  for (const auto& l : arr) {
    Layer layer;
    const auto in = l.at("in").get<Eigen::Index>();
    const auto out = l.at("out").get<Eigen::Index>();
    layer.weight = Mat::Zero(out, in);
    layer.bias = Vec::Zero(out);
    layer.activation = parse_activation(l.at("activation").get<std::string>());
    net.layers.push_back(std::move(layer));
  }
  return net;
}

json config_json(const TrainConfig& c) {
  return {{"alpha", c.alpha},
          {"beta", c.beta},
          {"learning_rate", c.learning_rate},
          {"momentum", c.momentum},
          {"epochs", c.epochs},
          {"batch_windows", c.batch_windows},
          {"ridge", c.ridge},
          {"validation_fraction", c.validation_fraction},
          {"clip_norm", c.clip_norm},
          {"hidden", c.hidden},
          {"latent", c.latent},
          {"activation", activation_name(c.activation)},
          {"seed", c.seed}};
}

TrainConfig config_from_json(const json& j) {
  TrainConfig c;
  c.alpha = j.at("alpha").get<double>();
  c.beta = j.at("beta").get<double>();
  c.learning_rate = j.at("learning_rate").get<double>();
  c.momentum = j.at("momentum").get<double>();
  c.epochs = j.at("epochs").get<int>();
  c.batch_windows = j.at("batch_windows").get<int>();
  c.ridge = j.at("ridge").get<double>();
  c.validation_fraction = j.at("validation_fraction").get<double>();
  c.clip_norm = j.at("clip_norm").get<double>();
  c.hidden = j.at("hidden").get<std::vector<int>>();
  c.latent = j.at("latent").get<int>();
  c.activation = parse_activation(j.at("activation").get<std::string>());
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

}  // namespace

void save_model(const fs::path& path, const KoopmanModel& model, const TrainConfig& cfg) {
  model.validate();
  const json header{{"format", "gdmd-koopman"},
                    {"version", 1},
                    {"window", model.window},
                    {"latent", model.latent},
                    {"encoder", layers_json(model.encoder)},
                    {"decoder", layers_json(model.decoder)},
                    {"config", config_json(cfg)},
                    {"seed", cfg.seed}};
  const std::string h = header.dump();
  const Vec theta = model.parameters();
  std::string raw(8 + 8 + h.size() + 8 * static_cast<std::size_t>(theta.size()), '\0');
  std::memcpy(raw.data(), kModelMagic, 8);
  const auto len = static_cast<std::uint64_t>(h.size());
  std::memcpy(raw.data() + 8, &len, 8);
  std::memcpy(raw.data() + 16, h.data(), h.size());
  std::memcpy(raw.data() + 16 + h.size(), theta.data(), 8 * static_cast<std::size_t>(theta.size()));
  write_text(path, raw);
}

KoopmanModel load_model(const fs::path& path, TrainConfig* cfg) {
  const std::string raw = read_text(path);
  if (raw.size() < 16 || std::memcmp(raw.data(), kModelMagic, 8) != 0)
    throw Error(ErrorCode::Io, "missing GDMDKOOP header in " + path.string());
  std::uint64_t len = 0;
  std::memcpy(&len, raw.data() + 8, 8);
  if (raw.size() < 16 + len) throw Error(ErrorCode::Io, "truncated model header in " + path.string());
  KoopmanModel m;
  try {
    const json h = json::parse(raw.substr(16, len));
    m.window = h.at("window").get<int>();
    m.latent = h.at("latent").get<int>();
    m.encoder = layers_from_json(h.at("encoder"));
    m.decoder = layers_from_json(h.at("decoder"));
    if (cfg) *cfg = config_from_json(h.at("config"));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Io, std::string("bad model header: ") + e.what());
  }
  m.validate();
  const std::size_t count = static_cast<std::size_t>(m.parameter_count());
  if (raw.size() != 16 + len + 8 * count) throw Error(ErrorCode::Io, "weight blob size mismatch in " + path.string());
  Vec theta(static_cast<Eigen::Index>(count));
  std::memcpy(theta.data(), raw.data() + 16 + len, 8 * count);
  m.set_parameters(theta);
  return m;
}

void write_training_log(const fs::path& path, const std::vector<EpochLog>& log) {
  std::string out = "epoch,L,L_recon,L_lkis,L_reg,val_L,val_L_recon,val_L_lkis,val_L_reg\n";
  for (const auto& e : log) {
    out += join_row({std::to_string(e.epoch), format_double(e.train.total), format_double(e.train.recon),
                     format_double(e.train.lkis), format_double(e.train.reg), format_double(e.validation.total),
                     format_double(e.validation.recon), format_double(e.validation.lkis),
                     format_double(e.validation.reg)});
  }
  write_text(path, out);
}

namespace {

void write_vector_pair(const fs::path& dir, const std::string& stem, const Vec& v, int n) {
  const CMat m = mode_from_vector(v, n);
  write_matrix_csv(dir / (stem + "_re.csv"), m.real());
  write_matrix_csv(dir / (stem + "_im.csv"), m.imag());
}

Vec read_vector_pair(const fs::path& dir, const std::string& stem, int n) {
  const Mat re = read_matrix_csv(dir / (stem + "_re.csv"));
  const Mat im = read_matrix_csv(dir / (stem + "_im.csv"));
  if (re.rows() != n || re.cols() != n || im.rows() != n || im.cols() != n)
    throw Error(ErrorCode::Io, "atlas mode has wrong shape: " + stem);
  const int e = edge_count(n);
  Vec v(2 * e);
  v.head(e) = upper_triangle(re);
  v.tail(e) = upper_triangle(im);
  return v;
}

}  // namespace

void write_atlas(const fs::path& dir, const ModeAtlas& atlas) {
  fs::create_directories(dir);
  json bins = json::array();
  for (std::size_t b = 0; b < atlas.bins.size(); ++b) {
    const AtlasBin& ab = atlas.bins[b];
    json centroids = json::array();
    for (std::size_t c = 0; c < ab.centroids.size(); ++c) {
      const std::string stem = "bin" + std::to_string(b) + "_c" + std::to_string(c) + "_centroid";
      write_vector_pair(dir, stem, ab.centroids[c], atlas.n);
      centroids.push_back(stem);
    }
    json aligned = json::array();
    for (std::size_t s = 0; s < ab.aligned.size(); ++s) {
      json row = json::array();
      for (std::size_t c = 0; c < ab.aligned[s].size(); ++c) {
        if (!ab.aligned[s][c]) {
          row.push_back(nullptr);
          continue;
        }
        const std::string stem = "bin" + std::to_string(b) + "_c" + std::to_string(c) + "_s" + std::to_string(s);
        write_vector_pair(dir, stem, *ab.aligned[s][c], atlas.n);
        row.push_back(stem);
      }
      aligned.push_back(row);
    }
    bins.push_back({{"f_lo", ab.f_lo}, {"f_hi", ab.f_hi}, {"centroids", centroids}, {"aligned", aligned}});
  }
  write_json(dir / "atlas.json", json{{"n", atlas.n}, {"subjects", atlas.subjects}, {"bins", bins}});
}

ModeAtlas read_atlas(const fs::path& dir) {
  const json j = read_json(dir / "atlas.json");
  ModeAtlas atlas;
  try {
    atlas.n = j.at("n").get<int>();
    atlas.subjects = j.at("subjects").get<std::vector<std::string>>();
    for (const auto& b : j.at("bins")) {
      AtlasBin ab;
      ab.f_lo = b.at("f_lo").get<double>();
      ab.f_hi = b.at("f_hi").get<double>();
      for (const auto& c : b.at("centroids")) ab.centroids.push_back(read_vector_pair(dir, c.get<std::string>(), atlas.n));
      for (const auto& row : b.at("aligned")) {
        std::vector<std::optional<Vec>> r;
        for (const auto& cell : row) {
          if (cell.is_null()) r.emplace_back(std::nullopt);
          else r.emplace_back(read_vector_pair(dir, cell.get<std::string>(), atlas.n));
        }
        ab.aligned.push_back(std::move(r));
      }
      atlas.bins.push_back(std::move(ab));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Io, std::string("bad atlas.json: ") + e.what());
  }
  return atlas;
}

Vec ScoreTable::column(const std::string& name) const {
  const auto it = std::find(columns.begin(), columns.end(), name);
  if (it == columns.end()) throw Error(ErrorCode::InvalidArgument, "score table has no column '" + name + "'");
  return values.col(it - columns.begin());
}

Mat ScoreTable::columns_of(const std::vector<std::string>& names) const {
  Mat out(values.rows(), static_cast<Eigen::Index>(names.size()));
  for (std::size_t i = 0; i < names.size(); ++i) out.col(static_cast<Eigen::Index>(i)) = column(names[i]);
  return out;
}

ScoreTable read_score_table(const fs::path& path) {
  const auto rows = read_csv(path);
  if (rows.size() < 2) throw Error(ErrorCode::Io, "score table needs a header and data rows: " + path.string());
  ScoreTable t;
  t.columns.assign(rows.front().begin() + 1, rows.front().end());
  t.values.resize(static_cast<Eigen::Index>(rows.size() - 1), static_cast<Eigen::Index>(t.columns.size()));
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].size() != rows.front().size()) throw Error(ErrorCode::Io, "ragged rows in " + path.string());
    t.subjects.push_back(rows[i][0]);
    for (std::size_t j = 1; j < rows[i].size(); ++j)
      t.values(static_cast<Eigen::Index>(i - 1), static_cast<Eigen::Index>(j - 1)) = parse_double(rows[i][j], path);
  }
  return t;
}

void write_score_table(const fs::path& path, const ScoreTable& table) {
  std::vector<std::string> header{"subject_id"};
  header.insert(header.end(), table.columns.begin(), table.columns.end());
  std::string out = join_row(header);
  for (Eigen::Index i = 0; i < table.values.rows(); ++i) {
    std::vector<std::string> cells{table.subjects[static_cast<std::size_t>(i)]};
    for (Eigen::Index j = 0; j < table.values.cols(); ++j) cells.push_back(format_double(table.values(i, j)));
    out += join_row(cells);
  }
  write_text(path, out);
}

}  // namespace gdmd::io
