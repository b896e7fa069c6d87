#pragma once

// Momentum-contrastive training: the online encoder embeds one view of each
// pair, the momentum copy embeds the other, and InfoNCE with in-batch
// negatives pulls matching pairs together.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <utility>
#include <vector>

#include "structrep/corpus.hpp"
#include "structrep/encoder.hpp"

namespace structrep {

struct TrainConfig {
  double temperature = 0.2;
  double base_lr = 1e-4;
  double weight_decay = 0.05;
  int batch_size = 32;
  int total_steps = 2000;
  double momentum = 0.99;
  std::uint64_t seed = 0;
  double swap_probability = 0.5;  // chance of using syn as the query view

  void validate() const;
};

struct InfoNceResult {
  double loss = 0.0;
  Matrix grad;           // dloss/df; f' is treated as a constant
  double pos_sim = 0.0;  // mean f_i . f'_i
  double neg_sim = 0.0;  // mean f_i . f'_j over j != i
};

// Rows of f and f_prime are unit-norm embeddings of the same B pairs.
InfoNceResult info_nce(const Matrix& f, const Matrix& f_prime, double tau);

double cosine_lr(long step, long total_steps, double base_lr);

struct AdamWState {
  Trainables m;
  Trainables v;
  long step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  static AdamWState zeros_like(const Trainables& params);
};

// Decoupled weight decay on the tensors flagged as decayed, then the
// bias-corrected Adam update.
void adamw_step(Trainables& params, const Trainables& grads, AdamWState& state, double lr, double weight_decay);

struct StepRecord {
  long step = 0;
  double loss = 0.0;
  double lr = 0.0;
  double pos_sim = 0.0;
  double neg_sim = 0.0;
};

struct TrainReport {
  std::vector<StepRecord> steps;
};

struct TrainResult {
  EncoderParams params;
  MomentumParams momentum;
  TrainReport report;
};

using ImagePair = std::pair<ImageRaster, ImageRaster>;  // (source, synthetic)
using StepCallback = std::function<void(const StepRecord&)>;

// Trains from freshly initialised parameters seeded by config.seed.
TrainResult train(const std::vector<ImagePair>& pairs, const EncoderConfig& encoder, const TrainConfig& config,
                  const StepCallback& on_step = {});

// Continues from given parameters; the momentum copy starts equal to them.
TrainResult train(const std::vector<ImagePair>& pairs, EncoderParams params, const TrainConfig& config,
                  const StepCallback& on_step = {});

// Loads the "train" split of a corpus.
std::vector<ImagePair> load_train_pairs(const Manifest& manifest);

inline constexpr const char* kTrainReportFormat = "structrep-train-report";
inline constexpr int kTrainReportVersion = 1;
void write_train_report(const std::filesystem::path& path, const TrainReport& report, const TrainConfig& config);

}  // namespace structrep
