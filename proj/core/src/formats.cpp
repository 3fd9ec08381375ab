#include "amtk/formats.hpp"

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace amtk {

namespace {

[[noreturn]] void line_error(const char* what, size_t line, const std::string& detail) {
  throw InvalidArgument(std::string(what) + " line " + std::to_string(line) + ": " + detail);
}

double parse_double(const std::string& field, const char* what, size_t line) {
  try {
    size_t used = 0;
    const double v = std::stod(field, &used);
    if (used != field.size() || !std::isfinite(v)) throw std::invalid_argument(field);
    return v;
  } catch (const std::exception&) {
    line_error(what, line, "bad number '" + field + "'");
  }
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> fields;
  std::istringstream ss(line);
  std::string f;
  while (ss >> f) fields.push_back(f);
  return fields;
}

bool skippable(const std::string& line) {
  const auto first = line.find_first_not_of(" \t\r");
  return first == std::string::npos || line.compare(first, 2, ";;") == 0;
}

std::string format_seconds(double t) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3f", t);
  return buf;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidArgument("cannot write " + path);
  return out;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidArgument("cannot read " + path);
  return in;
}

void write_u32(std::ostream& out, uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v),
                              static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t read_u32(std::istream& in, const char* what) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4))
    throw InvalidArgument(std::string("profiles: truncated ") + what);
  return uint32_t(b[0]) | uint32_t(b[1]) << 8 | uint32_t(b[2]) << 16 |
         uint32_t(b[3]) << 24;
}

constexpr char kProfileMagic[8] = {'A', 'M', 'T', 'K', 'S', 'P', 'K', '1'};

}  // namespace

// ---------------------------------------------------------------------------
// CTM
// ---------------------------------------------------------------------------

void write_ctm(std::ostream& out, const std::vector<SpeakerWord>& words,
               const std::string& recording) {
  for (const auto& w : words) {
    if (w.word.empty()) throw InvalidArgument("ctm: empty token");
    out << recording << ' ' << w.channel << ' ' << format_seconds(w.start) << ' '
        << format_seconds(w.end - w.start) << ' ' << w.word << ' '
        << format_seconds(w.confidence) << ' '
        << (w.speaker.empty() ? "-" : w.speaker) << '\n';
  }
}

std::vector<SpeakerWord> read_ctm(std::istream& in) {
  std::vector<SpeakerWord> words;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (skippable(line)) continue;
    const auto f = split_fields(line);
    if (f.size() != 7)
      line_error("ctm", lineno, "expected 7 fields, got " + std::to_string(f.size()));
    SpeakerWord w;
    w.channel = int(parse_double(f[1], "ctm", lineno));
    w.start = parse_double(f[2], "ctm", lineno);
    const double dur = parse_double(f[3], "ctm", lineno);
    if (dur < 0.0) line_error("ctm", lineno, "negative duration");
    w.end = w.start + dur;
    w.word = f[4];
    w.confidence = float(parse_double(f[5], "ctm", lineno));
    w.speaker = f[6] == "-" ? "" : f[6];
    words.push_back(std::move(w));
  }
  return words;
}

void write_ctm_file(const std::string& path, const std::vector<SpeakerWord>& words,
                    const std::string& recording) {
  auto out = open_out(path);
  write_ctm(out, words, recording);
}

std::vector<SpeakerWord> read_ctm_file(const std::string& path) {
  auto in = open_in(path);
  return read_ctm(in);
}

// ---------------------------------------------------------------------------
// RTTM
// ---------------------------------------------------------------------------

void write_rttm(std::ostream& out, const std::vector<SpeakerSegment>& segments,
                const std::string& recording) {
  for (const auto& s : segments) {
    if (s.speaker.empty()) throw InvalidArgument("rttm: empty speaker");
    out << "SPEAKER " << recording << " 1 " << format_seconds(s.start) << ' '
        << format_seconds(s.end - s.start) << " <NA> <NA> " << s.speaker
        << " <NA> <NA>\n";
  }
}

std::vector<SpeakerSegment> read_rttm(std::istream& in) {
  std::vector<SpeakerSegment> segments;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (skippable(line)) continue;
    const auto f = split_fields(line);
    if (f.empty() || f[0] != "SPEAKER") continue;  // other row types
    if (f.size() < 8) line_error("rttm", lineno, "SPEAKER row needs 8+ fields");
    SpeakerSegment s;
    s.start = parse_double(f[3], "rttm", lineno);
    const double dur = parse_double(f[4], "rttm", lineno);
    if (dur < 0.0) line_error("rttm", lineno, "negative duration");
    s.end = s.start + dur;
    s.speaker = f[7];
    segments.push_back(std::move(s));
  }
  return segments;
}

void write_rttm_file(const std::string& path,
                     const std::vector<SpeakerSegment>& segments,
                     const std::string& recording) {
  auto out = open_out(path);
  write_rttm(out, segments, recording);
}

std::vector<SpeakerSegment> read_rttm_file(const std::string& path) {
  auto in = open_in(path);
  return read_rttm(in);
}

// ---------------------------------------------------------------------------
// Hypothesis interchange
// ---------------------------------------------------------------------------

void HypothesisRecord::validate() const {
  if (channel < 0) throw InvalidArgument("hypothesis record: negative channel");
  if (segment_id.empty()) throw InvalidArgument("hypothesis record: empty segment id");
  if (entries.empty()) throw InvalidArgument("hypothesis record: no entries");
  for (size_t i = 1; i < entries.size(); ++i)
    if (entries[i].score > entries[i - 1].score + 1e-12)
      throw InvalidArgument("hypothesis record: scores increase");
}

NBestList HypothesisRecord::to_nbest() const {
  validate();
  NBestList list;
  list.span = span;
  for (const auto& e : entries) {
    NBestEntry out;
    out.score = e.score;
    for (const auto& w : e.words) {
      TimedWord t;
      t.word = w.word;
      t.start = w.start;
      t.end = w.end;
      t.confidence = w.confidence;
      out.words.push_back(std::move(t));
    }
    list.entries.push_back(std::move(out));
  }
  list.validate();
  return list;
}

std::vector<SpeakerWord> HypothesisRecord::best_words() const {
  validate();
  auto words = entries.front().words;
  for (auto& w : words) w.channel = channel;
  return words;
}

void write_hypotheses(std::ostream& out, const std::vector<HypothesisRecord>& records) {
  for (const auto& r : records) {
    r.validate();
    nlohmann::json j;
    j["channel"] = r.channel;
    j["segment_id"] = r.segment_id;
    j["start"] = r.span.start;
    j["end"] = r.span.end;
    auto& entries = j["nbest"] = nlohmann::json::array();
    for (const auto& e : r.entries) {
      nlohmann::json je;
      je["score"] = e.score;
      auto& words = je["words"] = nlohmann::json::array();
      for (const auto& w : e.words) {
        nlohmann::json jw;
        jw["word"] = w.word;
        jw["start"] = w.start;
        jw["end"] = w.end;
        jw["confidence"] = w.confidence;
        if (!w.speaker.empty()) {
          jw["speaker"] = w.speaker;
          jw["speaker_score"] = w.speaker_score;
        }
        words.push_back(std::move(jw));
      }
      entries.push_back(std::move(je));
    }
    out << j.dump() << '\n';
  }
}

std::vector<HypothesisRecord> read_hypotheses(std::istream& in) {
  std::vector<HypothesisRecord> records;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      HypothesisRecord r;
      r.channel = j.at("channel").get<int>();
      r.segment_id = j.at("segment_id").get<std::string>();
      r.span.start = j.at("start").get<double>();
      r.span.end = j.at("end").get<double>();
      for (const auto& je : j.at("nbest")) {
        InterchangeEntry e;
        e.score = je.at("score").get<double>();
        for (const auto& jw : je.at("words")) {
          SpeakerWord w;
          w.word = jw.at("word").get<std::string>();
          w.start = jw.at("start").get<double>();
          w.end = jw.at("end").get<double>();
          w.confidence = jw.at("confidence").get<float>();
          if (jw.contains("speaker")) {
            w.speaker = jw.at("speaker").get<std::string>();
            w.speaker_score = jw.value("speaker_score", 1.0f);
          }
          w.channel = r.channel;
          e.words.push_back(std::move(w));
        }
        r.entries.push_back(std::move(e));
      }
      r.validate();
      records.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      line_error("hypotheses", lineno, e.what());
    }
  }
  return records;
}

void write_hypotheses_file(const std::string& path,
                           const std::vector<HypothesisRecord>& records) {
  auto out = open_out(path);
  write_hypotheses(out, records);
}

std::vector<HypothesisRecord> read_hypotheses_file(const std::string& path) {
  auto in = open_in(path);
  return read_hypotheses(in);
}

// ---------------------------------------------------------------------------
// Speaker profiles
// ---------------------------------------------------------------------------

void write_profiles(std::ostream& out, const std::vector<SpeakerProfile>& profiles) {
  if (profiles.empty()) throw InvalidArgument("profiles: nothing to write");
  const auto dim = profiles.front().embedding.v.size();
  for (const auto& p : profiles) {
    if (p.speaker_id.empty()) throw InvalidArgument("profiles: empty speaker id");
    if (p.embedding.v.size() != dim)
      throw InvalidArgument("profiles: mixed embedding dimensions");
  }
  out.write(kProfileMagic, sizeof(kProfileMagic));
  write_u32(out, uint32_t(dim));
  write_u32(out, uint32_t(profiles.size()));
  for (const auto& p : profiles) {
    write_u32(out, uint32_t(p.speaker_id.size()));
    out.write(p.speaker_id.data(), std::streamsize(p.speaker_id.size()));
    const char flag = p.short_enrollment ? 1 : 0;
    out.write(&flag, 1);
    out.write(reinterpret_cast<const char*>(p.embedding.v.data()),
              std::streamsize(sizeof(float) * size_t(dim)));
  }
  if (!out) throw InvalidArgument("profiles: write failed");
}

std::vector<SpeakerProfile> read_profiles(std::istream& in) {
  char magic[sizeof(kProfileMagic)];
  if (!in.read(magic, sizeof(magic)) ||
      std::string_view(magic, sizeof(magic)) !=
          std::string_view(kProfileMagic, sizeof(kProfileMagic)))
    throw InvalidArgument("profiles: not a speaker profile file");
  const uint32_t dim = read_u32(in, "header");
  const uint32_t count = read_u32(in, "header");
  if (dim == 0 || dim > 65536) throw InvalidArgument("profiles: implausible dimension");
  std::vector<SpeakerProfile> profiles;
  for (uint32_t i = 0; i < count; ++i) {
    const uint32_t name_len = read_u32(in, "speaker id");
    if (name_len > 4096) throw InvalidArgument("profiles: implausible id length");
    std::string id(name_len, '\0');
    char flag = 0;
    Eigen::VectorXf v(dim);
    if (!in.read(id.data(), name_len) || !in.read(&flag, 1) ||
        !in.read(reinterpret_cast<char*>(v.data()),
                 std::streamsize(sizeof(float) * dim)))
      throw InvalidArgument("profiles: truncated profile entry");
    SpeakerProfile p;
    p.speaker_id = std::move(id);
    p.short_enrollment = flag != 0;
    p.embedding = make_embedding(std::move(v), {0.0, 0.0});
    profiles.push_back(std::move(p));
  }
  return profiles;
}

void write_profiles_file(const std::string& path,
                         const std::vector<SpeakerProfile>& profiles) {
  auto out = open_out(path);
  write_profiles(out, profiles);
}

std::vector<SpeakerProfile> read_profiles_file(const std::string& path) {
  auto in = open_in(path);
  return read_profiles(in);
}

// ---------------------------------------------------------------------------
// Score reports
// ---------------------------------------------------------------------------

nlohmann::json score_report_json(const ScoreReport& report) {
  return nlohmann::json{
      {"wer_pct", report.wer_pct},
      {"sawer_pct", report.sawer_pct},
      {"der", {{"miss_pct", report.der.miss_pct},
               {"false_alarm_pct", report.der.false_alarm_pct},
               {"speaker_error_pct", report.der.speaker_error_pct},
               {"der_pct", report.der.der_pct}}},
      {"counts", {{"sub", report.counts.sub},
                  {"ins", report.counts.ins},
                  {"del", report.counts.del},
                  {"correct", report.counts.correct}}}};
}

std::string score_report_text(const ScoreReport& report) {
  char buf[512];
  std::snprintf(buf, sizeof(buf),
                "WER    %6.2f%%  (sub %ld, ins %ld, del %ld, correct %ld)\n"
                "SAWER  %6.2f%%\n"
                "DER    %6.2f%%  (miss %.2f%%, false alarm %.2f%%, speaker error %.2f%%)\n",
                report.wer_pct, report.counts.sub, report.counts.ins,
                report.counts.del, report.counts.correct, report.sawer_pct,
                report.der.der_pct, report.der.miss_pct,
                report.der.false_alarm_pct, report.der.speaker_error_pct);
  return buf;
}

}  // namespace amtk
