// amtk -- command line front end: simulate meetings, align and enhance
// multi-device captures, enroll speakers, attribute and combine hypotheses,
// and score transcripts. Exit codes: 0 success, 2 configuration or input
// error, 3 stage failure.
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "amtk/formats.hpp"
#include "amtk/pipeline.hpp"
#include "amtk/wav.hpp"

namespace fsn = std::filesystem;
using namespace amtk;

namespace {

std::vector<SpeakerWord> reference_as_words(const ReferenceTranscript& ref) {
  std::vector<SpeakerWord> words;
  for (const auto& w : ref.words) {
    SpeakerWord sw;
    sw.word = w.token;
    sw.start = w.start;
    sw.end = w.end;
    sw.speaker = w.speaker;
    words.push_back(std::move(sw));
  }
  std::sort(words.begin(), words.end(),
            [](const SpeakerWord& a, const SpeakerWord& b) {
              return a.start < b.start;
            });
  return words;
}

ReferenceTranscript transcript_from_words(const std::vector<SpeakerWord>& words) {
  ReferenceTranscript ref;
  for (const auto& w : words) {
    if (w.speaker.empty())
      throw InvalidArgument(
          "reference words need speaker labels (CTM column 7)");
    ref.words.push_back({w.word, w.start, w.end, w.speaker});
  }
  return ref;
}

// Same-speaker word runs with gaps up to `gap_s` become one segment.
std::vector<SpeakerSegment> words_to_segments(
    const std::vector<SpeakerWord>& words, double gap_s = 0.3) {
  std::vector<SpeakerWord> sorted = words;
  std::sort(sorted.begin(), sorted.end(),
            [](const SpeakerWord& a, const SpeakerWord& b) {
              return a.start < b.start;
            });
  std::vector<SpeakerSegment> segments;
  for (const auto& w : sorted) {
    if (!segments.empty() && segments.back().speaker == w.speaker &&
        w.start - segments.back().end <= gap_s) {
      segments.back().end = std::max(segments.back().end, w.end);
    } else {
      segments.push_back({w.speaker, w.start, w.end});
    }
  }
  return segments;
}

std::vector<TimedWord> timed_words(const std::vector<SpeakerWord>& words) {
  std::vector<TimedWord> out;
  for (const auto& w : words)
    out.push_back({w.word, w.start, w.end, w.confidence});
  return out;
}

// ---------------------------------------------------------------------------

int cmd_simulate(const std::string& config_path, const std::string& out_dir,
                 int64_t seed_override) {
  auto cfg = experiment_from_file(config_path);
  if (seed_override >= 0) cfg.seed = uint64_t(seed_override);
  auto script = make_script(cfg.script, cfg.seed);
  auto meeting = simulate_meeting(script, cfg.devices, cfg.seed, cfg.sample_rate);

  fsn::create_directories(out_dir);
  const fsn::path dir(out_dir);
  for (size_t k = 0; k < meeting.device_audio.size(); ++k)
    write_wav_mono(dir / ("device_" + std::to_string(k) + ".wav"),
                   meeting.device_audio[k], meeting.sample_rate);
  write_ctm_file((dir / "reference.ctm").string(),
                 reference_as_words(meeting.reference));
  write_rttm_file((dir / "reference.rttm").string(),
                  meeting.reference_segments);

  nlohmann::json meta{{"sample_rate", meeting.sample_rate},
                      {"devices", meeting.device_audio.size()},
                      {"duration_s", script.duration()},
                      {"words", script.word_count()},
                      {"overlap_fraction", meeting.overlap_fraction},
                      {"seed", cfg.seed}};
  std::ofstream(dir / "meta.json") << meta.dump(2) << '\n';
  std::printf("wrote %zu device captures, %.1f s, %zu words, overlap %.1f%%\n",
              meeting.device_audio.size(), script.duration(),
              script.word_count(), 100.0 * meeting.overlap_fraction);
  return 0;
}

int cmd_align(const std::vector<std::string>& inputs, const std::string& out,
              int ref, double interval, double delay) {
  if (inputs.size() < 2)
    throw InvalidArgument("align: need at least two input captures");
  WavData multi;
  for (const auto& path : inputs) {
    auto mono = read_wav(path);
    if (mono.channels.size() != 1)
      throw InvalidArgument("align: " + path + " is not a mono capture");
    if (multi.channels.empty()) multi.sample_rate = mono.sample_rate;
    if (mono.sample_rate != multi.sample_rate)
      throw InvalidArgument("align: sample rates differ across captures");
    multi.channels.push_back(std::move(mono.channels[0]));
  }

  AlignmentConfig cfg;
  cfg.sample_rate = multi.sample_rate;
  cfg.reference_stream = ref;
  cfg.detection_interval_s = interval;
  cfg.output_delay_s = delay;
  auto aligned = align_offline(multi.channels, cfg);

  WavData out_data;
  out_data.sample_rate = multi.sample_rate;
  out_data.channels = std::move(aligned);
  write_wav(out, out_data, WavFormat::Float32);
  std::printf("aligned %zu captures, %zu samples each\n",
              out_data.channels.size(), out_data.channels[0].size());
  return 0;
}

int cmd_beamform(const std::string& input, const std::string& out_dir,
                 const std::string& scheme, double loading, double forgetting) {
  auto multi = read_wav(input);
  if (multi.channels.size() < 2)
    throw InvalidArgument("beamform: input must be a multichannel capture");

  BeamformerConfig bank;
  if (scheme == "all") {
    bank.scheme = BeamformerConfig::Scheme::AllChannel;
  } else if (scheme == "loo") {
    bank.scheme = BeamformerConfig::Scheme::LeaveOneOut;
  } else {
    throw InvalidArgument("beamform: scheme must be all or loo");
  }
  bank.diagonal_loading = loading;
  bank.forgetting = forgetting;

  auto beams = enhance_session(multi.channels, multi.sample_rate, StftConfig{},
                               BaselineMaskConfig{}, bank);
  fsn::create_directories(out_dir);
  const fsn::path dir(out_dir);
  for (size_t k = 0; k < beams.size(); ++k)
    write_wav_mono(dir / ("beam_" + std::to_string(k) + ".wav"), beams[k],
                   multi.sample_rate);
  std::printf("wrote %zu beams to %s\n", beams.size(), out_dir.c_str());
  return 0;
}

int cmd_enroll(const std::string& speaker, const std::string& wav_path,
               const std::string& profiles_path, double stride) {
  auto audio = read_wav_mono(wav_path);
  auto rate = read_wav(wav_path).sample_rate;
  BaselineEmbeddingExtractor extractor(rate);
  auto profile = enroll_speaker(speaker, audio, rate, extractor, stride);

  std::vector<SpeakerProfile> profiles;
  if (fsn::exists(profiles_path))
    profiles = read_profiles_file(profiles_path);
  bool replaced = false;
  for (auto& p : profiles)
    if (p.speaker_id == speaker) {
      p = profile;
      replaced = true;
    }
  if (!replaced) profiles.push_back(profile);
  write_profiles_file(profiles_path, profiles);
  std::printf("%s %s (%.1f s%s); %zu profiles in %s\n",
              replaced ? "updated" : "enrolled", speaker.c_str(),
              double(audio.size()) / rate,
              profile.short_enrollment ? ", short enrollment" : "",
              profiles.size(), profiles_path.c_str());
  return 0;
}

int cmd_diarize(const std::string& wav_path, const std::string& hyp_path,
                const std::string& profiles_path, const std::string& out_path,
                const std::string& rttm_path, double stride,
                double merge_threshold, double reject_threshold) {
  auto wav = read_wav(wav_path);
  if (wav.channels.size() != 1)
    throw InvalidArgument("diarize: expected a mono capture");
  const auto& audio = wav.channels[0];
  const int rate = wav.sample_rate;
  auto profiles = read_profiles_file(profiles_path);
  auto records = read_hypotheses_file(hyp_path);

  BaselineEmbeddingExtractor extractor(rate);
  DiarizationConfig cfg;
  cfg.stride_s = stride;
  cfg.merge_threshold = merge_threshold;
  cfg.reject_threshold = reject_threshold;

  constexpr double kPad = 0.35;
  const double audio_end = double(audio.size()) / rate;
  std::vector<SpeakerWord> all_words;
  for (auto& record : records) {
    const double lo = std::clamp(record.span.start - kPad, 0.0, audio_end);
    const double hi = std::clamp(record.span.end + kPad, lo, audio_end);
    const auto a0 = static_cast<size_t>(std::llround(lo * rate));
    const auto a1 =
        std::min(audio.size(), static_cast<size_t>(std::llround(hi * rate)));
    const double seg_start = double(a0) / rate;
    const double seg_end = double(a1) / rate;
    auto words = timed_words(record.entries.front().words);
    for (auto& w : words) {
      w.start = std::clamp(w.start, seg_start, seg_end);
      w.end = std::clamp(w.end, w.start, seg_end);
    }
    auto attributed =
        attribute(std::span<const float>(audio.data() + a0, a1 - a0), rate,
                  seg_start, words, extractor, profiles, cfg);
    for (auto& w : attributed) w.channel = record.channel;
    record.entries.front().words = attributed;
    all_words.insert(all_words.end(), attributed.begin(), attributed.end());
  }
  write_hypotheses_file(out_path, records);
  if (!rttm_path.empty())
    write_rttm_file(rttm_path, words_to_segments(all_words));
  std::printf("attributed %zu words across %zu segments\n", all_words.size(),
              records.size());
  return 0;
}

int cmd_combine(const std::vector<std::string>& inputs, const std::string& out,
                const std::string& mode, double window, double advance,
                double lambda, double stall) {
  if (inputs.size() < 2)
    throw InvalidArgument("combine: need at least two hypothesis files");
  std::vector<std::vector<HypothesisRecord>> channels;
  for (size_t i = 0; i < inputs.size(); ++i) {
    auto records = read_hypotheses_file(inputs[i]);
    if (records.empty())
      throw InvalidArgument("combine: " + inputs[i] + " holds no records");
    for (auto& r : records)
      r.channel = channel_of_path(inputs[i], int(i));
    channels.push_back(std::move(records));
  }

  std::vector<SpeakerWord> combined;
  if (mode == "rover") {
    IncrementalRoverConfig cfg;
    cfg.window_s = window;
    cfg.advance_s = advance;
    cfg.stall_timeout_s = stall;
    cfg.rover.time_penalty_per_s = lambda;
    IncrementalRover rover(int(channels.size()), cfg);
    for (size_t k = 0; k < channels.size(); ++k) {
      std::vector<SpeakerWord> words;
      for (const auto& r : channels[k]) {
        const auto& best = r.entries.front().words;
        words.insert(words.end(), best.begin(), best.end());
      }
      std::sort(words.begin(), words.end(),
                [](const SpeakerWord& a, const SpeakerWord& b) {
                  return a.start < b.start;
                });
      double seen = words.empty() ? 0.0 : words.back().end;
      for (const auto& r : channels[k]) seen = std::max(seen, r.span.end);
      rover.push(int(k), words, seen);
      combined_append(combined, rover.take_final());
    }
    combined_append(combined, rover.flush());
  } else if (mode == "cnc") {
    CncConfig cfg;
    cfg.lambda = lambda;
    std::vector<std::vector<std::vector<SpeakerWord>>> per_channel;
    for (const auto& records : channels) {
      std::vector<std::vector<SpeakerWord>> segments;
      for (const auto& r : records) segments.push_back(r.entries.front().words);
      per_channel.push_back(std::move(segments));
    }
    combined = cnc_combine_segments(per_channel, cfg);
  } else {
    throw InvalidArgument("combine: mode must be rover or cnc");
  }
  write_ctm_file(out, combined);
  std::printf("combined %zu channels into %zu words\n", channels.size(),
              combined.size());
  return 0;
}

int cmd_score(const std::string& ref_path, const std::string& hyp_path,
              int overlap_limit, double margin, const std::string& json_path) {
  auto hyp = read_ctm_file(hyp_path);
  ScoreReport report;
  if (fsn::path(ref_path).extension() == ".rttm") {
    auto segments = read_rttm_file(ref_path);
    report = der(segments, hyp, margin);
  } else {
    auto ref = transcript_from_words(read_ctm_file(ref_path));
    report = score_transcript(ref, hyp, overlap_limit, margin);
  }
  std::fputs(score_report_text(report).c_str(), stdout);
  if (!json_path.empty())
    std::ofstream(json_path) << score_report_json(report).dump(2) << '\n';
  return 0;
}

int cmd_run(const std::string& config_path, int64_t seed_override,
            const std::string& artifacts, const std::string& report_path) {
  auto cfg = experiment_from_file(config_path);
  if (seed_override >= 0) cfg.seed = uint64_t(seed_override);
  if (!artifacts.empty()) cfg.pipeline.artifacts_dir = artifacts;

  auto script = make_script(cfg.script, cfg.seed);
  auto meeting = simulate_meeting(script, cfg.devices, cfg.seed, cfg.sample_rate);
  auto result = run_pipeline(meeting, script.speakers, cfg.pipeline, cfg.seed);

  for (const auto& ch : result.channels)
    std::printf("channel %d: WER %6.2f%%  (%zu words)\n", ch.channel,
                ch.wer_pct, ch.words.size());
  std::printf("mean channel WER %6.2f%%\n", result.mean_channel_wer_pct);
  std::fputs(score_report_text(result.report).c_str(), stdout);
  if (!report_path.empty())
    std::ofstream(report_path) << score_report_json(result.report).dump(2)
                               << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"asynchronous multi-device meeting transcription toolkit"};
  app.require_subcommand(1);

  // simulate
  std::string sim_config, sim_out;
  int64_t sim_seed = -1;
  auto* sim = app.add_subcommand("simulate", "render a synthetic meeting");
  sim->add_option("--config", sim_config, "experiment config (json)")
      ->required();
  sim->add_option("--out-dir", sim_out, "output directory")->required();
  sim->add_option("--seed", sim_seed, "override the config seed");

  // align
  std::vector<std::string> al_inputs;
  std::string al_out;
  int al_ref = 0;
  double al_interval = 30.0, al_delay = 2.0;
  auto* al = app.add_subcommand("align", "align per-device captures");
  al->add_option("inputs", al_inputs, "mono wav per device")->required();
  al->add_option("--out", al_out, "aligned multichannel wav")->required();
  al->add_option("--ref", al_ref, "reference stream index");
  al->add_option("--interval", al_interval, "lag detection interval (s)");
  al->add_option("--delay", al_delay, "output delay budget (s)");

  // beamform
  std::string bf_input, bf_out, bf_scheme = "loo";
  double bf_loading = 1e-3, bf_forgetting = 0.95;
  auto* bf = app.add_subcommand("beamform", "run the beamformer bank");
  bf->add_option("input", bf_input, "aligned multichannel wav")->required();
  bf->add_option("--out-dir", bf_out, "output directory")->required();
  bf->add_option("--scheme", bf_scheme, "all or loo");
  bf->add_option("--loading", bf_loading, "diagonal loading");
  bf->add_option("--forgetting", bf_forgetting, "covariance forgetting factor");

  // enroll
  std::string en_speaker, en_wav, en_profiles;
  double en_stride = 0.32;
  auto* en = app.add_subcommand("enroll", "add a speaker profile");
  en->add_option("--speaker", en_speaker, "speaker id")->required();
  en->add_option("--wav", en_wav, "enrollment audio")->required();
  en->add_option("--profiles", en_profiles, "profile store")->required();
  en->add_option("--stride", en_stride, "embedding stride (s)");

  // diarize
  std::string di_wav, di_hyp, di_profiles, di_out, di_rttm;
  double di_stride = 0.32, di_merge = 1.0, di_reject = -1.0;
  auto* di = app.add_subcommand("diarize", "attribute words to speakers");
  di->add_option("--wav", di_wav, "session audio (mono)")->required();
  di->add_option("--hyp", di_hyp, "hypotheses (jsonl)")->required();
  di->add_option("--profiles", di_profiles, "profile store")->required();
  di->add_option("--out", di_out, "attributed hypotheses (jsonl)")->required();
  di->add_option("--rttm", di_rttm, "also write speaker segments");
  di->add_option("--stride", di_stride, "embedding stride (s)");
  di->add_option("--merge-threshold", di_merge, "subsegment merge cosine");
  di->add_option("--reject-threshold", di_reject,
                 "below this score words become unknown (<0 disables)");

  // combine
  std::vector<std::string> cb_inputs;
  std::string cb_out, cb_mode = "rover";
  double cb_window = 10.0, cb_advance = 5.0, cb_lambda = 0.5, cb_stall = 30.0;
  auto* cb = app.add_subcommand("combine", "combine channel hypotheses");
  cb->add_option("inputs", cb_inputs, "hypotheses jsonl per channel")
      ->required();
  cb->add_option("--out", cb_out, "combined transcript (ctm)")->required();
  cb->add_option("--mode", cb_mode, "rover or cnc");
  cb->add_option("--window", cb_window, "voting window (s)");
  cb->add_option("--advance", cb_advance, "window advance (s)");
  cb->add_option("--lambda", cb_lambda, "time mismatch penalty per second");
  cb->add_option("--stall", cb_stall, "straggler timeout (s)");

  // score
  std::string sc_ref, sc_hyp, sc_json;
  int sc_limit = 1;
  double sc_margin = 0.5;
  auto* sc = app.add_subcommand("score", "score a transcript");
  sc->add_option("--ref", sc_ref, "reference (ctm with speakers, or rttm)")
      ->required();
  sc->add_option("--hyp", sc_hyp, "hypothesis (ctm)")->required();
  sc->add_option("--overlap-limit", sc_limit,
                 "score spans with at most this many speakers");
  sc->add_option("--margin", sc_margin, "diarization margin (s)");
  sc->add_option("--json", sc_json, "also write the report as json");

  // run
  std::string rn_config, rn_artifacts, rn_report;
  int64_t rn_seed = -1;
  auto* rn = app.add_subcommand("run", "simulate and run the full pipeline");
  rn->add_option("--config", rn_config, "experiment config (json)")
      ->required();
  rn->add_option("--seed", rn_seed, "override the config seed");
  rn->add_option("--artifacts", rn_artifacts, "persist per-stage outputs");
  rn->add_option("--report", rn_report, "write the score report as json");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help / --version
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }

  try {
    if (sim->parsed()) return cmd_simulate(sim_config, sim_out, sim_seed);
    if (al->parsed())
      return cmd_align(al_inputs, al_out, al_ref, al_interval, al_delay);
    if (bf->parsed())
      return cmd_beamform(bf_input, bf_out, bf_scheme, bf_loading,
                          bf_forgetting);
    if (en->parsed())
      return cmd_enroll(en_speaker, en_wav, en_profiles, en_stride);
    if (di->parsed())
      return cmd_diarize(di_wav, di_hyp, di_profiles, di_out, di_rttm,
                         di_stride, di_merge, di_reject);
    if (cb->parsed())
      return cmd_combine(cb_inputs, cb_out, cb_mode, cb_window, cb_advance,
                         cb_lambda, cb_stall);
    if (sc->parsed())
      return cmd_score(sc_ref, sc_hyp, sc_limit, sc_margin, sc_json);
    if (rn->parsed())
      return cmd_run(rn_config, rn_seed, rn_artifacts, rn_report);
  } catch (const StageFailure& e) {
    std::cerr << "stage failure: " << e.what() << "\n";
    return 3;
  } catch (const InvalidArgument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "failure: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
