#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "mstgcn/graph.hpp"
#include "mstgcn/tensor.hpp"

namespace mstgcn {

inline constexpr std::size_t kNumStages = 5;  // Wake, N1, N2, N3, REM
extern const std::array<const char*, kNumStages> kStageNames;

// One 30-second multichannel epoch with its stage label.
struct EpochRecord {
  std::uint32_t subject_id = 0;
  std::uint32_t epoch_index = 0;
  std::uint8_t label = 0;                // 0..4
  std::vector<float> signal;             // [channels * samples], row-major
};

struct DatasetManifest {
  std::uint16_t channels = 0;
  std::uint32_t samples_per_epoch = 0;
  std::vector<std::string> channel_names;
  std::vector<std::uint32_t> subjects;              // ascending, distinct
  std::array<std::uint64_t, kNumStages> class_counts{};
};

struct Dataset {
  DatasetManifest manifest;
  std::vector<EpochRecord> records;

  // record rows per subject, in stored order
  std::map<std::uint32_t, std::vector<std::size_t>> rows_by_subject() const;
  void rebuild_manifest_counts();
};

// Binary container; save-then-load is bit-exact.
void save_dataset(const Dataset& ds, const std::string& path);
Dataset load_dataset(const std::string& path);

std::uint32_t crc32(const unsigned char* data, std::size_t len,
                    std::uint32_t seed = 0);

// A temporal-context window: T_n = 2d+1 record rows, clamped at the
// night boundaries; labeled by its center epoch.
struct Window {
  std::vector<std::size_t> rows;  // indices into Dataset::records
  std::size_t center_row = 0;
  std::uint32_t subject_id = 0;
  std::uint8_t label = 0;
};

// Windows for one subject's rows (must be sorted by epoch_index).
std::vector<Window> window_sequence(const Dataset& ds,
                                    const std::vector<std::size_t>& rows,
                                    std::size_t d);
// Windows for every subject; never spans subjects.
std::vector<Window> make_windows(const Dataset& ds, std::size_t d);

// ---- electrode layouts ----

// CSV schema: header `name,x,y,z`, one row per channel.
ElectrodeLayout load_electrode_layout(const std::string& path);
// "isruc6" (F3,F4,C3,C4,O1,O2 on a unit head) or "grid<R>x<C>".
ElectrodeLayout builtin_layout(const std::string& name);
ElectrodeLayout layout_for(const std::string& spec, std::size_t channels);

// ---- synthetic data ----

struct ClassSignature {
  double freq_lo;     // Hz
  double freq_hi;     // Hz
  double amplitude;
};

struct SyntheticSpec {
  std::size_t subjects = 3;
  std::size_t epochs_per_subject = 100;
  std::size_t channels = 6;
  std::size_t classes = 5;
  std::vector<ClassSignature> signatures;  // defaults filled when empty
  double bias_strength = 0.5;   // per-subject gain/offset perturbation
  double noise_sigma = 0.1;
  std::uint64_t seed = 0;
  std::uint32_t samples_per_epoch = 3000;  // 30 s at 100 Hz
  double sample_rate_hz = 100.0;
};

Dataset generate_synthetic(const SyntheticSpec& spec);

}  // namespace mstgcn
