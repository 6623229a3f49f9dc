#pragma once

// File formats. Numbers are written with 17 significant digits so files
// round-trip exactly and identical inputs give byte-identical outputs.

#include "gdmd/graph_dmd.hpp"
#include "gdmd/koopman.hpp"
#include "gdmd/modes_post.hpp"
#include "gdmd/regression.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace gdmd::io {

namespace fs = std::filesystem;

std::string format_double(double v);

void write_matrix_csv(const fs::path& path, const Mat& m);
Mat read_matrix_csv(const fs::path& path);

/// Rows are ROIs, columns frames, first column the ROI label. An optional
/// header row is recognized when its first cell is empty, "roi" or "label"
/// (case-insensitive); the writer always emits one ("roi,0,1,...").
BoldSeries read_bold_csv(const fs::path& path, double dt);
void write_bold_csv(const fs::path& path, const BoldSeries& x);

/// 16-byte header: magic "BOLDF64\0", uint32 n, uint32 t (little endian),
/// then n*t little-endian float64 values, one ROI after another.
BoldSeries read_bold_binary(const fs::path& path, double dt);
void write_bold_binary(const fs::path& path, const BoldSeries& x);

/// ".csv" selects the CSV reader, anything else the binary reader.
BoldSeries read_bold(const fs::path& path, double dt);

/// Directory with graph_00000.csv, ... and meta.json {n, count, dt_eff}.
void write_graph_sequence(const fs::path& dir, const GraphSequence& gs);
GraphSequence read_graph_sequence(const fs::path& dir);

/// <stem>_re.csv, <stem>_im.csv and <stem>.json with lambda_re, lambda_im,
/// growth, freq_hz, window_index (null when absent), norm, amplitude_re,
/// amplitude_im.
void write_mode(const fs::path& dir, const std::string& stem, const DynamicMode& mode);
DynamicMode read_mode(const fs::path& dir, const std::string& stem);

/// mode_00000... plus index.json listing the stems in order.
void write_modes(const fs::path& dir, const std::vector<DynamicMode>& modes);
std::vector<DynamicMode> read_modes(const fs::path& dir);

/// Magic "GDMDKOOP", uint64 header length, JSON header (architecture,
/// training configuration, seed), then the parameter vector as
/// little-endian float64.
void save_model(const fs::path& path, const KoopmanModel& model, const TrainConfig& cfg);
KoopmanModel load_model(const fs::path& path, TrainConfig* cfg = nullptr);

/// epoch, L, L_recon, L_lkis, L_reg, val_L, val_L_recon, val_L_lkis, val_L_reg.
void write_training_log(const fs::path& path, const std::vector<EpochLog>& log);

/// atlas.json index plus one <bin>_c<cluster>_<subject> CSV pair per
/// aligned representative and a centroid pair per cluster.
void write_atlas(const fs::path& dir, const ModeAtlas& atlas);
ModeAtlas read_atlas(const fs::path& dir);

/// Per-subject table: first column subject_id, then named numeric columns.
struct ScoreTable {
  std::vector<std::string> subjects;
  std::vector<std::string> columns;
  Mat values;  // subjects x columns

  Vec column(const std::string& name) const;
  Mat columns_of(const std::vector<std::string>& names) const;
};

ScoreTable read_score_table(const fs::path& path);
void write_score_table(const fs::path& path, const ScoreTable& table);

std::string read_text(const fs::path& path);
void write_text(const fs::path& path, const std::string& text);

}  // namespace gdmd::io
