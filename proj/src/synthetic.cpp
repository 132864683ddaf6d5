#include <cmath>

#include "mstgcn/data.hpp"
#include "mstgcn/rng.hpp"

namespace mstgcn {

namespace {

std::vector<ClassSignature> default_signatures(std::size_t classes) {
  // well-separated bands below the 50 Hz Nyquist of 100 Hz sampling
  std::vector<ClassSignature> sig;
  for (std::size_t c = 0; c < classes; ++c) {
    const double base = 1.0 + 4.0 * static_cast<double>(c);
    sig.push_back({base, base + 2.0, 1.0});
  }
  return sig;
}

}  // namespace

Dataset generate_synthetic(const SyntheticSpec& spec) {
  if (spec.subjects == 0 || spec.epochs_per_subject == 0 ||
      spec.channels == 0 || spec.classes == 0 || spec.classes > kNumStages) {
    throw ParameterError("generate_synthetic: counts must be positive and "
                         "classes <= 5");
  }
  if (spec.bias_strength < 0) {
    throw ParameterError("generate_synthetic: bias strength must be >= 0");
  }
  auto signatures = spec.signatures.empty()
                        ? default_signatures(spec.classes)
                        : spec.signatures;
  if (signatures.size() != spec.classes) {
    throw ParameterError("generate_synthetic: need one signature per class");
  }

  Rng rng(spec.seed);

  // fixed per-subject channel gains and DC offsets, drawn once
  std::vector<std::vector<double>> gain(spec.subjects),
      offset(spec.subjects);
  for (std::size_t s = 0; s < spec.subjects; ++s) {
    gain[s].resize(spec.channels);
    offset[s].resize(spec.channels);
    for (std::size_t ch = 0; ch < spec.channels; ++ch) {
      gain[s][ch] = 1.0 + spec.bias_strength * rng.normal();
      offset[s][ch] = spec.bias_strength * rng.normal();
    }
  }

  Dataset ds;
  ds.manifest.channels = static_cast<std::uint16_t>(spec.channels);
  ds.manifest.samples_per_epoch = spec.samples_per_epoch;
  for (std::size_t ch = 0; ch < spec.channels; ++ch) {
    ds.manifest.channel_names.push_back("ch" + std::to_string(ch));
  }

  const std::size_t L = spec.samples_per_epoch;
  const double dt = 1.0 / spec.sample_rate_hz;
  for (std::size_t s = 0; s < spec.subjects; ++s) {
    for (std::size_t e = 0; e < spec.epochs_per_subject; ++e) {
      EpochRecord rec;
      rec.subject_id = static_cast<std::uint32_t>(s);
      rec.epoch_index = static_cast<std::uint32_t>(e);
      rec.label = static_cast<std::uint8_t>(e % spec.classes);  // balanced
      rec.signal.resize(spec.channels * L);
      const ClassSignature& sig = signatures[rec.label];
      for (std::size_t ch = 0; ch < spec.channels; ++ch) {
        const double freq = rng.uniform(sig.freq_lo, sig.freq_hi);
        const double phase = rng.uniform(0.0, 2.0 * M_PI);
        const double g = gain[s][ch];
        const double o = offset[s][ch];
        float* dst = rec.signal.data() + ch * L;
        for (std::size_t t = 0; t < L; ++t) {
          const double wave =
              sig.amplitude *
              std::sin(2.0 * M_PI * freq * static_cast<double>(t) * dt +
                       phase);
          const double v = g * (wave + spec.noise_sigma * rng.normal()) + o;
          dst[t] = static_cast<float>(v);
        }
      }
      ds.records.push_back(std::move(rec));
    }
  }
  ds.rebuild_manifest_counts();
  return ds;
}

}  // namespace mstgcn
