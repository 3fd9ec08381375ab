// diarize.hpp -- enrolled-speaker attribution: fixed-stride embeddings,
// neighbor-only agglomerative word segmentation, cosine identification.
#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "amtk/types.hpp"

namespace amtk {

struct Embedding {
  Eigen::VectorXf v;  // L2-normalized
  TimeSpan span;
};

// Normalizes on creation; zero vectors are rejected.
Embedding make_embedding(Eigen::VectorXf v, TimeSpan span);

// Zero-norm inputs score 0.
double cosine_similarity(const Eigen::VectorXf& a, const Eigen::VectorXf& b);

struct WordSegment {
  std::string word;
  double start = 0.0;
  double end = 0.0;
  Embedding embedding;
};

struct SpeakerProfile {
  std::string speaker_id;
  Embedding embedding;
  bool short_enrollment = false;  // under 10 s of enrollment audio
};

// One embedding per stride window; per-window failures come back as nullopt
// and are skipped downstream.
class EmbeddingExtractor {
 public:
  virtual ~EmbeddingExtractor() = default;
  virtual int dim() const = 0;
  virtual std::optional<Embedding> extract(std::span<const float> window,
                                           TimeSpan span) = 0;
};

// Deterministic test/demo extractor: level-normalized log band energies plus
// spectral centroid and rolloff, mapped through a fixed seeded random
// projection. No training, no state.
class BaselineEmbeddingExtractor : public EmbeddingExtractor {
 public:
  explicit BaselineEmbeddingExtractor(int sample_rate, int dim = 128,
                                      unsigned seed = 7);

  int dim() const override { return dim_; }
  std::optional<Embedding> extract(std::span<const float> window,
                                   TimeSpan span) override;

 private:
  int sample_rate_;
  int dim_;
  Eigen::MatrixXf projection_;  // dim x feature count
};

using DvectorSequence = std::vector<std::optional<Embedding>>;

// Stride windows tile the audio; the final partial window is kept with its
// true span. t0 places the first window on the session clock.
DvectorSequence extract_dvectors(std::span<const float> audio, int sample_rate,
                                 EmbeddingExtractor& extractor,
                                 double stride_s = 0.32, double t0 = 0.0);

struct SubsegmentRange {
  size_t begin = 0;  // word index range [begin, end)
  size_t end = 0;
  Embedding embedding;  // normalized mean over member words
};

// Repeatedly merges the neighboring pair with the highest cosine of mean
// embeddings until that cosine falls below threshold. Output ranges
// partition [0, words.size()) in order.
std::vector<SubsegmentRange> segment_words(
    const std::vector<WordSegment>& words, double threshold = 0.15);

struct SpeakerMatch {
  std::string speaker;
  double score = 0.0;
};

// Highest-cosine profile; ties break to the lexicographically smallest id.
SpeakerMatch identify_speaker(const Embedding& query,
                              const std::vector<SpeakerProfile>& profiles);

struct DiarizationConfig {
  double stride_s = 0.32;
  double merge_threshold = 0.15;
  double reject_threshold = -1.0;  // < 0 disables unknown-speaker rejection

  void validate() const;
};

// Full per-segment attribution: stride embeddings -> per-word pooled
// embeddings (overlap mean, else nearest window) -> segmentation ->
// identification. Words must lie within the segment audio.
std::vector<SpeakerWord> attribute(std::span<const float> segment_audio,
                                   int sample_rate, double segment_start,
                                   const std::vector<TimedWord>& words,
                                   EmbeddingExtractor& extractor,
                                   const std::vector<SpeakerProfile>& profiles,
                                   const DiarizationConfig& config = {});

// Mean of stride embeddings over the enrollment clip; clips under 10 s set
// short_enrollment.
SpeakerProfile enroll_speaker(const std::string& speaker_id,
                              std::span<const float> audio, int sample_rate,
                              EmbeddingExtractor& extractor,
                              double stride_s = 0.32);

}  // namespace amtk
