#include "amtk/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <set>

#include "amtk/formats.hpp"
#include "amtk/wav.hpp"

namespace amtk {

namespace {

uint64_t mix_seed(uint64_t seed, uint64_t stream) {
  uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Execution errors inside a stage surface as StageFailure named after it;
// config problems are detected before any stage runs and stay InvalidArgument.
template <typename F>
auto stage(const char* name, F&& body) -> decltype(body()) {
  try {
    return body();
  } catch (const StageFailure&) {
    throw;
  } catch (const std::exception& e) {
    throw StageFailure(name, e.what());
  }
}

std::vector<TimedWord> truth_stream(const ReferenceTranscript& ref) {
  std::vector<TimedWord> words;
  for (const auto& w : ref.words) {
    TimedWord t;
    t.word = w.token;
    t.start = w.start;
    t.end = w.end;
    words.push_back(std::move(t));
  }
  std::stable_sort(words.begin(), words.end(),
                   [](const TimedWord& a, const TimedWord& b) {
                     return a.start < b.start;
                   });
  return words;
}

// Reference DER segments built by the same rule der() applies to the
// hypothesis: pad every word by the margin and merge per speaker, so the
// two sides share one notion of segment boundaries.
std::vector<SpeakerSegment> padded_reference_segments(
    const ReferenceTranscript& ref, double margin_s) {
  std::map<std::string, std::vector<TimeSpan>> by_speaker;
  for (const auto& w : ref.words)
    by_speaker[w.speaker].push_back({w.start - margin_s, w.end + margin_s});
  std::vector<SpeakerSegment> segments;
  for (auto& [speaker, spans] : by_speaker) {
    std::sort(spans.begin(), spans.end(),
              [](const TimeSpan& a, const TimeSpan& b) { return a.start < b.start; });
    TimeSpan cur = spans.front();
    for (size_t i = 1; i < spans.size(); ++i) {
      if (spans[i].start <= cur.end) {
        cur.end = std::max(cur.end, spans[i].end);
      } else {
        segments.push_back({speaker, cur.start, cur.end});
        cur = spans[i];
      }
    }
    segments.push_back({speaker, cur.start, cur.end});
  }
  std::sort(segments.begin(), segments.end(),
            [](const SpeakerSegment& a, const SpeakerSegment& b) {
              return a.start < b.start;
            });
  return segments;
}

std::vector<std::string> tokens_of(const std::vector<SpeakerWord>& words) {
  std::vector<std::string> toks;
  for (const auto& w : words) toks.push_back(w.word);
  return toks;
}

// Reference tokens in global time order, the same flattening sawer() uses.
std::vector<std::string> reference_tokens(const ReferenceTranscript& ref) {
  auto flat = ref.words;
  std::stable_sort(flat.begin(), flat.end(),
                   [](const ReferenceWord& a, const ReferenceWord& b) {
                     return a.start < b.start;
                   });
  std::vector<std::string> toks;
  for (const auto& w : flat) toks.push_back(w.token);
  return toks;
}

}  // namespace

std::vector<Samples> enhance_session(const std::vector<Samples>& aligned,
                                     int sample_rate, const StftConfig& stft_cfg,
                                     const BaselineMaskConfig& mask,
                                     const BeamformerConfig& bank_cfg) {
  if (aligned.empty()) throw InvalidArgument("enhance_session: no channels");
  if (sample_rate <= 0) throw InvalidArgument("enhance_session: bad rate");
  stft_cfg.validate();
  const int m = int(aligned.size());
  std::vector<Spectrogram> specs;
  for (int k = 0; k < m; ++k)
    specs.push_back(stft(aligned[size_t(k)], stft_cfg, k));
  const int frames = specs[0].frames();
  if (frames == 0) return aligned;  // shorter than one analysis frame

  const int batch_frames = std::max(1, sample_rate / stft_cfg.hop);
  BeamformerBank bank(m, bank_cfg);
  BaselineMaskConfig mask_cfg = mask;
  mask_cfg.sample_rate = sample_rate;
  BaselineMaskEstimator estimator(mask_cfg);

  const int bins = specs[0].bins();
  std::vector<Eigen::MatrixXcf> beams(static_cast<size_t>(m));
  for (auto& b : beams) b.resize(bins, frames);

  for (int b0 = 0; b0 < frames; b0 += batch_frames) {
    const int nb = std::min(batch_frames, frames - b0);
    MultiSpectrogram batch;
    for (int k = 0; k < m; ++k) {
      Spectrogram s;
      s.coef = specs[size_t(k)].coef.middleCols(b0, nb);
      s.config = stft_cfg;
      s.channel = k;
      s.frame0 = b0;
      batch.push_back(std::move(s));
    }
    auto masks = estimator.estimate(batch[0]);
    auto outputs = bank.process(batch, masks);
    for (int k = 0; k < m; ++k)
      beams[size_t(k)].middleCols(b0, nb) = outputs[size_t(k)].spec.coef;
  }

  std::vector<Samples> out;
  for (int k = 0; k < m; ++k) {
    Spectrogram s;
    s.coef = std::move(beams[size_t(k)]);
    s.config = stft_cfg;
    s.channel = k;
    auto audio = istft(s, stft_cfg);
    audio.resize(aligned[size_t(k)].size(), 0.0f);
    out.push_back(std::move(audio));
  }
  return out;
}

std::vector<SpeakerWord> cnc_combine_segments(
    const std::vector<std::vector<std::vector<SpeakerWord>>>& per_channel,
    const CncConfig& config) {
  config.validate();
  if (per_channel.empty())
    throw InvalidArgument("cnc_combine_segments: no channels");
  const size_t segments = per_channel[0].size();
  for (const auto& per_stream : per_channel)
    if (per_stream.size() != segments)
      throw InvalidArgument(
          "cnc_combine_segments: segment counts differ across channels");

  // Overlapped turns interleave words, which no linear network order can
  // represent; mid-sort and nudge any word that starts before the running
  // midpoint so the bins come out monotone. Only words inside overlap
  // regions move, and those are excluded from scoring anyway.
  auto cn_ready = [](std::vector<SpeakerWord> words) {
    std::stable_sort(words.begin(), words.end(),
                     [](const SpeakerWord& a, const SpeakerWord& b) {
                       return a.mid() < b.mid();
                     });
    double prev_mid = -std::numeric_limits<double>::infinity();
    for (auto& w : words) {
      if (w.start < prev_mid) {
        const double dur = w.end - w.start;
        w.start = prev_mid;
        w.end = prev_mid + dur;
      }
      prev_mid = w.mid();
    }
    return words;
  };

  std::vector<SpeakerWord> combined;
  for (size_t i = 0; i < segments; ++i) {
    ConfusionNetwork net = build_speaker_cn(cn_ready(per_channel[0][i]));
    for (size_t k = 1; k < per_channel.size(); ++k)
      net = align_cns(net, build_speaker_cn(cn_ready(per_channel[k][i])),
                      config.lambda);
    auto words = cnc_decode(net);
    combined.insert(combined.end(), words.begin(), words.end());
  }
  return combined;
}

ScoreReport score_transcript(const ReferenceTranscript& reference,
                             const std::vector<SpeakerWord>& hypothesis,
                             int overlap_limit, double margin_s,
                             std::vector<TimeSpan>* spans_out) {
  auto spans = overlap_filter(reference, overlap_limit);
  auto ref_f = restrict_reference(reference, spans);
  if (ref_f.words.empty())
    throw InvalidArgument("score: no reference words outside overlap");
  auto hyp_f = restrict_words(hypothesis, spans);
  ScoreReport report = sawer(ref_f, hyp_f);
  report.der =
      der(padded_reference_segments(ref_f, margin_s), hyp_f, margin_s).der;
  if (spans_out) *spans_out = std::move(spans);
  return report;
}

void PipelineConfig::validate() const {
  stft.validate();
  mask.validate();
  asr.validate();
  diarization.validate();
  rover.validate();
  cnc.validate();
  if (!(diagonal_loading > 0.0))
    throw InvalidArgument("pipeline: diagonal_loading must be positive");
  if (!(forgetting > 0.0 && forgetting <= 1.0))
    throw InvalidArgument("pipeline: forgetting must lie in (0, 1]");
  if (!(enrollment_s > 0.0))
    throw InvalidArgument("pipeline: enrollment_s must be positive");
  if (overlap_limit < 1)
    throw InvalidArgument("pipeline: overlap_limit must be at least 1");
  if (!(der_margin_s >= 0.0))
    throw InvalidArgument("pipeline: der_margin_s must be non-negative");
  for (double s : channel_severity)
    if (!(s >= 0.0) || !std::isfinite(s))
      throw InvalidArgument("pipeline: channel severities must be finite and >= 0");
}

PipelineResult run_pipeline(const SimulatedMeeting& meeting,
                            const std::vector<SpeakerVoice>& voices,
                            const PipelineConfig& config, uint64_t seed) {
  config.validate();
  const int fs = meeting.sample_rate;
  if (fs <= 0) throw InvalidArgument("pipeline: bad sample rate");
  if (meeting.device_audio.empty())
    throw InvalidArgument("pipeline: meeting has no device audio");
  if (meeting.reference.words.empty())
    throw InvalidArgument("pipeline: meeting has an empty reference");
  if (voices.empty()) throw InvalidArgument("pipeline: no speaker voices");
  const int channels = int(meeting.device_audio.size());
  if (config.beamforming == PipelineConfig::Beamforming::LeaveOneOut &&
      channels == 2)
    throw InvalidArgument(
        "pipeline: leave-one-out beamforming needs at least 3 channels");
  if (!config.channel_severity.empty() &&
      config.channel_severity.size() != size_t(channels))
    throw InvalidArgument("pipeline: channel_severity size must match devices");

  double duration = 0.0;
  for (const auto& w : meeting.reference.words) duration = std::max(duration, w.end);
  const auto target_len =
      static_cast<size_t>(std::llround((duration + 0.5) * fs));

  // -- align ---------------------------------------------------------------
  auto aligned = stage("align", [&] {
    std::vector<Samples> out;
    if (!config.align || channels == 1) {
      out.assign(meeting.device_audio.begin(), meeting.device_audio.end());
    } else {
      AlignmentConfig cfg = config.alignment;
      cfg.sample_rate = fs;
      out = align_offline(meeting.device_audio, cfg);
    }
    for (auto& s : out) s.resize(target_len, 0.0f);
    return out;
  });

  // -- enhance -------------------------------------------------------------
  auto enhanced = stage("enhance", [&] {
    if (config.beamforming == PipelineConfig::Beamforming::None || channels == 1)
      return aligned;
    BeamformerConfig bc;
    bc.scheme = config.beamforming == PipelineConfig::Beamforming::LeaveOneOut
                    ? BeamformerConfig::Scheme::LeaveOneOut
                    : BeamformerConfig::Scheme::AllChannel;
    bc.diagonal_loading = config.diagonal_loading;
    bc.forgetting = config.forgetting;
    return enhance_session(aligned, fs, config.stft, config.mask, bc);
  });

  // -- asr -----------------------------------------------------------------
  auto truth = truth_stream(meeting.reference);
  std::vector<std::vector<NBestList>> channel_nbest;
  stage("asr", [&] {
    for (int k = 0; k < channels; ++k) {
      const double severity =
          config.channel_severity.empty() ? 1.0 : config.channel_severity[size_t(k)];
      channel_nbest.push_back(mock_asr(truth, config.asr, k, severity));
    }
    return 0;
  });

  // -- enroll + attribute --------------------------------------------------
  BaselineEmbeddingExtractor extractor(fs);
  std::vector<SpeakerProfile> profiles;
  stage("enroll", [&] {
    for (size_t v = 0; v < voices.size(); ++v) {
      auto clip = enrollment_clip(voices[v], config.enrollment_s, fs,
                                  mix_seed(seed, 0xe14a0000ULL + v));
      profiles.push_back(enroll_speaker(voices[v].id, clip, fs, extractor,
                                        config.diarization.stride_s));
    }
    return 0;
  });

  // per stream, per segment, the attributed best hypothesis
  std::vector<std::vector<std::vector<SpeakerWord>>> attributed(
      static_cast<size_t>(channels));
  stage("diarize", [&] {
    constexpr double kPad = 0.35;
    for (int k = 0; k < channels; ++k) {
      const auto& audio = enhanced[size_t(k)];
      const double audio_end = double(audio.size()) / fs;
      for (const auto& list : channel_nbest[size_t(k)]) {
        const double lo = std::clamp(list.span.start - kPad, 0.0, audio_end);
        const double hi = std::clamp(list.span.end + kPad, lo, audio_end);
        const auto a0 = static_cast<size_t>(std::llround(lo * fs));
        const auto a1 =
            std::min(audio.size(), static_cast<size_t>(std::llround(hi * fs)));
        auto words = list.entries.front().words;
        const double seg_start = double(a0) / fs;
        const double seg_end = double(a1) / fs;
        for (auto& w : words) {  // jitter can poke past the slice ends
          w.start = std::clamp(w.start, seg_start, seg_end);
          w.end = std::clamp(w.end, w.start, seg_end);
        }
        auto out = attribute(
            std::span<const float>(audio.data() + a0, a1 - a0), fs, seg_start,
            words, extractor, profiles, config.diarization);
        for (auto& w : out) w.channel = k;
        attributed[size_t(k)].push_back(std::move(out));
      }
    }
    return 0;
  });

  // -- combine -------------------------------------------------------------
  std::vector<std::vector<SpeakerWord>> stream_words(static_cast<size_t>(channels));
  for (int k = 0; k < channels; ++k)
    for (const auto& seg : attributed[size_t(k)])
      stream_words[size_t(k)].insert(stream_words[size_t(k)].end(), seg.begin(),
                                     seg.end());

  std::vector<SpeakerWord> combined;
  stage("combine", [&] {
    if (config.combine == PipelineConfig::Combination::Rover) {
      combined = rover_combine_window(stream_words, {0.0, duration + 1.0},
                                      config.rover.rover);
    } else if (config.combine == PipelineConfig::Combination::Cnc) {
      combined = cnc_combine_segments(attributed, config.cnc);
    }
    return 0;
  });

  // -- score ---------------------------------------------------------------
  PipelineResult result;
  stage("score", [&] {
    auto spans = overlap_filter(meeting.reference, config.overlap_limit);
    auto ref_f = restrict_reference(meeting.reference, spans);
    if (ref_f.words.empty())
      throw StageFailure("score", "no reference words outside overlap");
    auto ref_tokens = reference_tokens(ref_f);

    double wer_sum = 0.0;
    for (int k = 0; k < channels; ++k) {
      ChannelTranscript ct;
      ct.channel = k;
      ct.nbest = std::move(channel_nbest[size_t(k)]);
      ct.words = stream_words[size_t(k)];
      auto hyp_f = restrict_words(ct.words, spans);
      ct.wer_pct = wer(ref_tokens, tokens_of(hyp_f)).wer_pct;
      wer_sum += ct.wer_pct;
      result.channels.push_back(std::move(ct));
    }
    result.mean_channel_wer_pct = wer_sum / channels;

    const std::vector<SpeakerWord>* scored = &combined;
    if (config.combine == PipelineConfig::Combination::None) {
      const auto best = std::min_element(
          result.channels.begin(), result.channels.end(),
          [](const ChannelTranscript& a, const ChannelTranscript& b) {
            return a.wer_pct < b.wer_pct;
          });
      scored = &best->words;
    }
    result.report = score_transcript(meeting.reference, *scored,
                                     config.overlap_limit, config.der_margin_s,
                                     &result.scored_spans);
    result.combined = combined;
    return 0;
  });

  // -- artifacts -----------------------------------------------------------
  if (!config.artifacts_dir.empty()) {
    stage("artifacts", [&] {
      namespace fs_ns = std::filesystem;
      const fs_ns::path dir(config.artifacts_dir);
      fs_ns::create_directories(dir);
      std::vector<HypothesisRecord> records;
      for (int k = 0; k < channels; ++k) {
        write_wav_mono(dir / ("aligned_" + std::to_string(k) + ".wav"),
                       aligned[size_t(k)], fs);
        if (enhanced != aligned)
          write_wav_mono(dir / ("beam_" + std::to_string(k) + ".wav"),
                         enhanced[size_t(k)], fs);
        write_ctm_file((dir / ("channel_" + std::to_string(k) + ".ctm")).string(),
                       stream_words[size_t(k)]);
        const auto& nbest = result.channels[size_t(k)].nbest;
        for (size_t i = 0; i < nbest.size(); ++i) {
          HypothesisRecord r;
          r.channel = k;
          r.segment_id = "ch" + std::to_string(k) + "-seg" + std::to_string(i);
          r.span = nbest[i].span;
          InterchangeEntry first;
          first.score = nbest[i].entries.front().score;
          first.words = attributed[size_t(k)][i];
          r.entries.push_back(std::move(first));
          for (size_t e = 1; e < nbest[i].entries.size(); ++e) {
            InterchangeEntry alt;
            alt.score = nbest[i].entries[e].score;
            for (const auto& w : nbest[i].entries[e].words) {
              SpeakerWord sw;
              sw.word = w.word;
              sw.start = w.start;
              sw.end = w.end;
              sw.confidence = w.confidence;
              sw.channel = k;
              alt.words.push_back(std::move(sw));
            }
            r.entries.push_back(std::move(alt));
          }
          records.push_back(std::move(r));
        }
      }
      write_hypotheses_file((dir / "hypotheses.jsonl").string(), records);
      if (!combined.empty())
        write_ctm_file((dir / "combined.ctm").string(), combined);
      std::ofstream jr(dir / "report.json");
      jr << score_report_json(result.report).dump(2) << '\n';
      std::ofstream tr(dir / "report.txt");
      tr << score_report_text(result.report);
      return 0;
    });
  }
  return result;
}

// ---------------------------------------------------------------------------
// Experiment configuration
// ---------------------------------------------------------------------------

void ExperimentConfig::validate() const {
  if (sample_rate <= 0) throw InvalidArgument("experiment: sample_rate must be positive");
  script.validate();
  if (devices.empty()) throw InvalidArgument("experiment: no devices");
  for (const auto& d : devices) d.validate();
  pipeline.validate();
  if (pipeline.beamforming == PipelineConfig::Beamforming::LeaveOneOut &&
      devices.size() == 2)
    throw InvalidArgument(
        "experiment: leave-one-out beamforming needs at least 3 devices");
}

namespace {

void check_keys(const nlohmann::json& j, const char* where,
                const std::set<std::string>& allowed) {
  if (!j.is_object())
    throw InvalidArgument(std::string("config ") + where + ": expected an object");
  for (const auto& [key, value] : j.items())
    if (!allowed.count(key))
      throw InvalidArgument(std::string("config ") + where + ": unknown key '" +
                            key + "'");
}

double num(const nlohmann::json& j, const char* key, double fallback) {
  return j.contains(key) ? j.at(key).get<double>() : fallback;
}

}  // namespace

ExperimentConfig experiment_from_json(const nlohmann::json& j) {
  ExperimentConfig cfg;
  try {
    check_keys(j, "root",
               {"seed", "sample_rate", "script", "devices", "pipeline"});
    cfg.seed = j.value("seed", cfg.seed);
    cfg.sample_rate = j.value("sample_rate", cfg.sample_rate);

    if (j.contains("script")) {
      const auto& s = j.at("script");
      check_keys(s, "script",
                 {"speakers", "duration_s", "overlap_target", "turn_s", "gap_s",
                  "word_s"});
      cfg.script.speakers = s.value("speakers", cfg.script.speakers);
      cfg.script.duration_s = num(s, "duration_s", cfg.script.duration_s);
      cfg.script.overlap_target = num(s, "overlap_target", cfg.script.overlap_target);
      cfg.script.turn_s = num(s, "turn_s", cfg.script.turn_s);
      cfg.script.gap_s = num(s, "gap_s", cfg.script.gap_s);
      cfg.script.word_s = num(s, "word_s", cfg.script.word_s);
    }

    if (j.contains("devices")) {
      cfg.devices.clear();
      for (const auto& d : j.at("devices")) {
        check_keys(d, "devices[]",
                   {"gain", "delay_s", "drift_ppm", "snr_db", "echo_taps"});
        DeviceModel dev;
        dev.gain = num(d, "gain", dev.gain);
        dev.delay_s = num(d, "delay_s", dev.delay_s);
        dev.drift_ppm = num(d, "drift_ppm", dev.drift_ppm);
        if (d.contains("snr_db") && !d.at("snr_db").is_null())
          dev.snr_db = d.at("snr_db").get<double>();
        if (d.contains("echo_taps"))
          for (const auto& t : d.at("echo_taps")) {
            check_keys(t, "echo_taps[]", {"delay_s", "gain"});
            dev.echo_taps.push_back(
                {num(t, "delay_s", 0.0), num(t, "gain", 0.0)});
          }
        cfg.devices.push_back(std::move(dev));
      }
    }

    if (j.contains("pipeline")) {
      const auto& p = j.at("pipeline");
      check_keys(p, "pipeline",
                 {"align", "alignment", "beamforming", "stft", "mask", "asr",
                  "diarization", "combine", "scoring", "artifacts_dir"});
      auto& pc = cfg.pipeline;
      pc.align = p.value("align", pc.align);
      pc.artifacts_dir = p.value("artifacts_dir", pc.artifacts_dir);

      if (p.contains("alignment")) {
        const auto& a = p.at("alignment");
        check_keys(a, "alignment",
                   {"detection_interval_s", "startup_interval_s",
                    "output_delay_s", "max_local_lag_s",
                    "significance_threshold", "coarse_window_s", "coarse_hop_s",
                    "reference_stream", "block_size"});
        auto& ac = pc.alignment;
        ac.detection_interval_s = num(a, "detection_interval_s", ac.detection_interval_s);
        ac.startup_interval_s = num(a, "startup_interval_s", ac.startup_interval_s);
        ac.output_delay_s = num(a, "output_delay_s", ac.output_delay_s);
        ac.max_local_lag_s = num(a, "max_local_lag_s", ac.max_local_lag_s);
        ac.significance_threshold =
            num(a, "significance_threshold", ac.significance_threshold);
        ac.coarse_window_s = num(a, "coarse_window_s", ac.coarse_window_s);
        ac.coarse_hop_s = num(a, "coarse_hop_s", ac.coarse_hop_s);
        ac.reference_stream = a.value("reference_stream", ac.reference_stream);
        ac.block_size = a.value("block_size", ac.block_size);
      }

      if (p.contains("beamforming")) {
        const auto& b = p.at("beamforming");
        check_keys(b, "beamforming", {"scheme", "diagonal_loading", "forgetting"});
        if (b.contains("scheme")) {
          const auto s = b.at("scheme").get<std::string>();
          if (s == "none") pc.beamforming = PipelineConfig::Beamforming::None;
          else if (s == "all") pc.beamforming = PipelineConfig::Beamforming::AllChannel;
          else if (s == "loo") pc.beamforming = PipelineConfig::Beamforming::LeaveOneOut;
          else throw InvalidArgument("config beamforming.scheme: expected none, all, or loo");
        }
        pc.diagonal_loading = num(b, "diagonal_loading", pc.diagonal_loading);
        pc.forgetting = num(b, "forgetting", pc.forgetting);
      }

      if (p.contains("stft")) {
        const auto& s = p.at("stft");
        check_keys(s, "stft", {"fft_size", "hop"});
        pc.stft.fft_size = s.value("fft_size", pc.stft.fft_size);
        pc.stft.hop = s.value("hop", pc.stft.hop);
      }

      if (p.contains("mask")) {
        const auto& m = p.at("mask");
        check_keys(m, "mask",
                   {"tracker_window_s", "sigmoid_slope_db", "floor_bias",
                    "smoothing"});
        pc.mask.tracker_window_s = num(m, "tracker_window_s", pc.mask.tracker_window_s);
        pc.mask.sigmoid_slope_db = num(m, "sigmoid_slope_db", pc.mask.sigmoid_slope_db);
        pc.mask.floor_bias = num(m, "floor_bias", pc.mask.floor_bias);
        pc.mask.smoothing = num(m, "smoothing", pc.mask.smoothing);
      }

      if (p.contains("asr")) {
        const auto& a = p.at("asr");
        check_keys(a, "asr",
                   {"p_sub", "p_del", "p_ins", "seed", "nbest_depth",
                    "segment_silence_ms", "time_jitter_ms", "channel_severity"});
        pc.asr.p_sub = num(a, "p_sub", pc.asr.p_sub);
        pc.asr.p_del = num(a, "p_del", pc.asr.p_del);
        pc.asr.p_ins = num(a, "p_ins", pc.asr.p_ins);
        pc.asr.seed = a.value("seed", pc.asr.seed);
        pc.asr.nbest_depth = a.value("nbest_depth", pc.asr.nbest_depth);
        pc.asr.segment_silence_ms = num(a, "segment_silence_ms", pc.asr.segment_silence_ms);
        pc.asr.time_jitter_ms = num(a, "time_jitter_ms", pc.asr.time_jitter_ms);
        if (a.contains("channel_severity"))
          pc.channel_severity = a.at("channel_severity").get<std::vector<double>>();
      }

      if (p.contains("diarization")) {
        const auto& d = p.at("diarization");
        check_keys(d, "diarization",
                   {"stride_s", "merge_threshold", "reject_threshold",
                    "enrollment_s"});
        pc.diarization.stride_s = num(d, "stride_s", pc.diarization.stride_s);
        pc.diarization.merge_threshold =
            num(d, "merge_threshold", pc.diarization.merge_threshold);
        pc.diarization.reject_threshold =
            num(d, "reject_threshold", pc.diarization.reject_threshold);
        pc.enrollment_s = num(d, "enrollment_s", pc.enrollment_s);
      }

      if (p.contains("combine")) {
        const auto& c = p.at("combine");
        check_keys(c, "combine",
                   {"mode", "window_s", "advance_s", "stall_timeout_s",
                    "lambda", "max_pair_gap_s", "temperature"});
        if (c.contains("mode")) {
          const auto m = c.at("mode").get<std::string>();
          if (m == "none") pc.combine = PipelineConfig::Combination::None;
          else if (m == "rover") pc.combine = PipelineConfig::Combination::Rover;
          else if (m == "cnc") pc.combine = PipelineConfig::Combination::Cnc;
          else throw InvalidArgument("config combine.mode: expected none, rover, or cnc");
        }
        pc.rover.window_s = num(c, "window_s", pc.rover.window_s);
        pc.rover.advance_s = num(c, "advance_s", pc.rover.advance_s);
        pc.rover.stall_timeout_s = num(c, "stall_timeout_s", pc.rover.stall_timeout_s);
        const double lambda = num(c, "lambda", pc.cnc.lambda);
        pc.cnc.lambda = lambda;
        pc.rover.rover.time_penalty_per_s = lambda;
        pc.rover.rover.max_pair_gap_s =
            num(c, "max_pair_gap_s", pc.rover.rover.max_pair_gap_s);
        pc.cnc.temperature = num(c, "temperature", pc.cnc.temperature);
      }

      if (p.contains("scoring")) {
        const auto& s = p.at("scoring");
        check_keys(s, "scoring", {"overlap_limit", "margin_s"});
        pc.overlap_limit = s.value("overlap_limit", pc.overlap_limit);
        pc.der_margin_s = num(s, "margin_s", pc.der_margin_s);
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig experiment_from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot read config " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument("config " + path + ": " + e.what());
  }
  return experiment_from_json(j);
}

nlohmann::json experiment_to_json(const ExperimentConfig& cfg) {
  nlohmann::json devices = nlohmann::json::array();
  for (const auto& d : cfg.devices) {
    nlohmann::json jd{{"gain", d.gain},
                      {"delay_s", d.delay_s},
                      {"drift_ppm", d.drift_ppm}};
    if (std::isfinite(d.snr_db)) jd["snr_db"] = d.snr_db;
    if (!d.echo_taps.empty()) {
      auto& taps = jd["echo_taps"] = nlohmann::json::array();
      for (const auto& t : d.echo_taps)
        taps.push_back({{"delay_s", t.delay_s}, {"gain", t.gain}});
    }
    devices.push_back(std::move(jd));
  }
  const auto& pc = cfg.pipeline;
  const char* scheme = pc.beamforming == PipelineConfig::Beamforming::None ? "none"
                       : pc.beamforming == PipelineConfig::Beamforming::AllChannel
                           ? "all"
                           : "loo";
  const char* mode = pc.combine == PipelineConfig::Combination::None ? "none"
                     : pc.combine == PipelineConfig::Combination::Rover ? "rover"
                                                                        : "cnc";
  nlohmann::json asr{{"p_sub", pc.asr.p_sub},
                     {"p_del", pc.asr.p_del},
                     {"p_ins", pc.asr.p_ins},
                     {"seed", pc.asr.seed},
                     {"nbest_depth", pc.asr.nbest_depth},
                     {"segment_silence_ms", pc.asr.segment_silence_ms},
                     {"time_jitter_ms", pc.asr.time_jitter_ms}};
  if (!pc.channel_severity.empty()) asr["channel_severity"] = pc.channel_severity;
  return nlohmann::json{
      {"seed", cfg.seed},
      {"sample_rate", cfg.sample_rate},
      {"script",
       {{"speakers", cfg.script.speakers},
        {"duration_s", cfg.script.duration_s},
        {"overlap_target", cfg.script.overlap_target},
        {"turn_s", cfg.script.turn_s},
        {"gap_s", cfg.script.gap_s},
        {"word_s", cfg.script.word_s}}},
      {"devices", devices},
      {"pipeline",
       {{"align", pc.align},
        {"beamforming",
         {{"scheme", scheme},
          {"diagonal_loading", pc.diagonal_loading},
          {"forgetting", pc.forgetting}}},
        {"stft", {{"fft_size", pc.stft.fft_size}, {"hop", pc.stft.hop}}},
        {"mask",
         {{"tracker_window_s", pc.mask.tracker_window_s},
          {"sigmoid_slope_db", pc.mask.sigmoid_slope_db},
          {"floor_bias", pc.mask.floor_bias},
          {"smoothing", pc.mask.smoothing}}},
        {"asr", asr},
        {"diarization",
         {{"stride_s", pc.diarization.stride_s},
          {"merge_threshold", pc.diarization.merge_threshold},
          {"reject_threshold", pc.diarization.reject_threshold},
          {"enrollment_s", pc.enrollment_s}}},
        {"combine",
         {{"mode", mode},
          {"window_s", pc.rover.window_s},
          {"advance_s", pc.rover.advance_s},
          {"stall_timeout_s", pc.rover.stall_timeout_s},
          {"lambda", pc.cnc.lambda},
          {"max_pair_gap_s", pc.rover.rover.max_pair_gap_s},
          {"temperature", pc.cnc.temperature}}},
        {"scoring",
         {{"overlap_limit", pc.overlap_limit}, {"margin_s", pc.der_margin_s}}},
        {"artifacts_dir", pc.artifacts_dir}}}};
}

}  // namespace amtk
