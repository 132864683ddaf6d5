#include "mstgcn/data.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include "binio.hpp"

namespace mstgcn {

const std::array<const char*, kNumStages> kStageNames = {
    "Wake", "N1", "N2", "N3", "REM"};

namespace {

constexpr char kMagic[4] = {'M', 'S', 'T', 'G'};
constexpr std::uint16_t kVersion = 1;

static_assert(sizeof(float) == 4);

std::uint32_t crc_table_entry(std::uint32_t i) {
  std::uint32_t c = i;
  for (int k = 0; k < 8; ++k) {
    c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : (c >> 1);
  }
  return c;
}

}  // namespace

std::uint32_t crc32(const unsigned char* data, std::size_t len,
                    std::uint32_t seed) {
  static const auto table = [] {
    std::array<std::uint32_t, 256> t{};
    for (std::uint32_t i = 0; i < 256; ++i) t[i] = crc_table_entry(i);
    return t;
  }();
  std::uint32_t c = seed ^ 0xFFFFFFFFu;
  for (std::size_t i = 0; i < len; ++i) {
    c = table[(c ^ data[i]) & 0xFFu] ^ (c >> 8);
  }
  return c ^ 0xFFFFFFFFu;
}

std::map<std::uint32_t, std::vector<std::size_t>> Dataset::rows_by_subject()
    const {
  std::map<std::uint32_t, std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < records.size(); ++i) {
    out[records[i].subject_id].push_back(i);
  }
  return out;
}

void Dataset::rebuild_manifest_counts() {
  manifest.class_counts.fill(0);
  std::set<std::uint32_t> subs;
  for (const auto& r : records) {
    if (r.label >= kNumStages) {
      throw FormatError("record label " + std::to_string(int(r.label)) +
                        " out of range");
    }
    ++manifest.class_counts[r.label];
    subs.insert(r.subject_id);
  }
  manifest.subjects.assign(subs.begin(), subs.end());
}

void save_dataset(const Dataset& ds, const std::string& path) {
  const std::size_t n = ds.manifest.channels;
  const std::size_t sig_len = n * ds.manifest.samples_per_epoch;
  if (ds.manifest.channel_names.size() != n) {
    throw FormatError("manifest channel-name table has " +
                      std::to_string(ds.manifest.channel_names.size()) +
                      " entries for " + std::to_string(n) + " channels");
  }
  binio::Writer w;
  w.bytes(kMagic, 4);
  w.u16(kVersion);
  w.u16(ds.manifest.channels);
  w.u32(ds.manifest.samples_per_epoch);
  w.u64(ds.records.size());
  for (const auto& name : ds.manifest.channel_names) {
    w.str(name);
  }
  for (const auto& r : ds.records) {
    if (r.signal.size() != sig_len) {
      throw FormatError("record signal has " + std::to_string(r.signal.size()) +
                        " samples, expected " + std::to_string(sig_len));
    }
    w.u32(r.subject_id);
    w.u32(r.epoch_index);
    w.u8(r.label);
    for (float v : r.signal) w.f32(v);
  }
  const std::uint32_t crc = crc32(w.buf.data(), w.buf.size());
  w.u32(crc);
  binio::write_file(path, w.buf);
}

Dataset load_dataset(const std::string& path) {
  std::vector<unsigned char> buf = binio::read_file(path);
  binio::Reader r{buf.data(), buf.size()};

  char magic[4];
  r.bytes(magic, 4, "magic");
  if (std::memcmp(magic, kMagic, 4) != 0) {
    throw FormatError("bad magic at byte offset 0; not a dataset container");
  }
  const std::uint16_t version = r.u16("version");
  if (version != kVersion) {
    throw FormatError("unsupported container version " +
                      std::to_string(version) + " at byte offset 4");
  }
  Dataset ds;
  ds.manifest.channels = r.u16("channel count");
  ds.manifest.samples_per_epoch = r.u32("samples per epoch");
  const std::uint64_t count = r.u64("record count");
  for (std::size_t i = 0; i < ds.manifest.channels; ++i) {
    ds.manifest.channel_names.push_back(r.str("channel name"));
  }
  const std::size_t sig_len =
      std::size_t(ds.manifest.channels) * ds.manifest.samples_per_epoch;
  ds.records.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    EpochRecord rec;
    rec.subject_id = r.u32("subject id");
    rec.epoch_index = r.u32("epoch index");
    rec.label = r.u8("label");
    if (rec.label >= kNumStages) {
      throw FormatError("label " + std::to_string(int(rec.label)) +
                        " out of range at byte offset " +
                        std::to_string(r.pos - 1));
    }
    rec.signal.resize(sig_len);
    r.bytes(rec.signal.data(), sig_len * 4, "signal");
    ds.records.push_back(std::move(rec));
  }
  const std::size_t crc_offset = r.pos;
  const std::uint32_t stored = r.u32("crc32");
  const std::uint32_t computed = crc32(buf.data(), crc_offset);
  if (stored != computed) {
    throw FormatError("checksum mismatch at byte offset " +
                      std::to_string(crc_offset));
  }
  if (r.pos != buf.size()) {
    throw FormatError("trailing bytes at offset " + std::to_string(r.pos));
  }
  ds.rebuild_manifest_counts();
  return ds;
}

std::vector<Window> window_sequence(const Dataset& ds,
                                    const std::vector<std::size_t>& rows,
                                    std::size_t d) {
  std::vector<Window> out;
  if (rows.empty()) return out;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (ds.records[rows[i]].epoch_index <=
        ds.records[rows[i - 1]].epoch_index) {
      throw FormatError("window_sequence: records of subject " +
                        std::to_string(ds.records[rows[i]].subject_id) +
                        " are not sorted by epoch_index");
    }
    if (ds.records[rows[i]].subject_id != ds.records[rows[0]].subject_id) {
      throw FormatError("window_sequence: rows span multiple subjects");
    }
  }
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(rows.size());
  out.reserve(rows.size());
  for (std::ptrdiff_t c = 0; c < n; ++c) {
    Window w;
    w.center_row = rows[static_cast<std::size_t>(c)];
    w.subject_id = ds.records[w.center_row].subject_id;
    w.label = ds.records[w.center_row].label;
    for (std::ptrdiff_t off = -static_cast<std::ptrdiff_t>(d);
         off <= static_cast<std::ptrdiff_t>(d); ++off) {
      std::ptrdiff_t idx = std::clamp<std::ptrdiff_t>(c + off, 0, n - 1);
      w.rows.push_back(rows[static_cast<std::size_t>(idx)]);
    }
    out.push_back(std::move(w));
  }
  return out;
}

std::vector<Window> make_windows(const Dataset& ds, std::size_t d) {
  std::vector<Window> out;
  for (const auto& [subject, rows] : ds.rows_by_subject()) {
    auto w = window_sequence(ds, rows, d);
    out.insert(out.end(), w.begin(), w.end());
  }
  return out;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  // RFC-4180-style: quoted fields may contain commas and doubled quotes
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += ch;
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  fields.push_back(cur);
  return fields;
}

}  // namespace

ElectrodeLayout load_electrode_layout(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open layout file " + path);
  std::string line;
  std::size_t line_no = 0;
  ElectrodeLayout layout;
  std::set<std::string> seen;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    auto fields = split_csv_line(line);
    if (line_no == 1) {
      if (fields.size() != 4 || fields[0] != "name" || fields[1] != "x" ||
          fields[2] != "y" || fields[3] != "z") {
        throw FormatError("layout line 1: expected header name,x,y,z");
      }
      continue;
    }
    if (fields.size() != 4) {
      throw FormatError("layout line " + std::to_string(line_no) +
                        ": expected 4 fields, got " +
                        std::to_string(fields.size()));
    }
    if (!seen.insert(fields[0]).second) {
      throw FormatError("layout line " + std::to_string(line_no) +
                        ": duplicate channel name '" + fields[0] + "'");
    }
    std::array<double, 3> c{};
    for (int i = 0; i < 3; ++i) {
      try {
        std::size_t used = 0;
        c[i] = std::stod(fields[i + 1], &used);
        if (used != fields[i + 1].size()) throw std::invalid_argument("");
      } catch (const std::exception&) {
        throw FormatError("layout line " + std::to_string(line_no) +
                          ": non-numeric coordinate '" + fields[i + 1] + "'");
      }
      if (!std::isfinite(c[i])) {
        throw FormatError("layout line " + std::to_string(line_no) +
                          ": non-finite coordinate");
      }
    }
    layout.names.push_back(fields[0]);
    layout.coords.push_back(c);
  }
  if (layout.names.empty()) {
    throw FormatError("layout file has no channel rows");
  }
  return layout;
}

ElectrodeLayout builtin_layout(const std::string& name) {
  if (name == "isruc6") {
    // six 10-20 scalp positions on a unit head model
    ElectrodeLayout l;
    l.names = {"F3", "F4", "C3", "C4", "O1", "O2"};
    l.coords = {{-0.545, 0.673, 0.500}, {0.545, 0.673, 0.500},
                {-0.707, 0.000, 0.707}, {0.707, 0.000, 0.707},
                {-0.309, -0.951, 0.000}, {0.309, -0.951, 0.000}};
    return l;
  }
  if (name.rfind("grid", 0) == 0) {
    const auto x = name.find('x', 4);
    if (x != std::string::npos) {
      try {
        const std::size_t rows = std::stoul(name.substr(4, x - 4));
        const std::size_t cols = std::stoul(name.substr(x + 1));
        if (rows >= 1 && cols >= 1) {
          ElectrodeLayout l;
          for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t c = 0; c < cols; ++c) {
              l.names.push_back("g" + std::to_string(r) + "_" +
                                std::to_string(c));
              l.coords.push_back({static_cast<double>(c),
                                  static_cast<double>(r), 0.0});
            }
          }
          return l;
        }
      } catch (const std::exception&) {
      }
    }
  }
  throw ParameterError("unknown builtin layout '" + name +
                       "' (expected isruc6 or grid<R>x<C>)");
}

namespace binio {

std::vector<unsigned char> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path);
  return std::vector<unsigned char>((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
}

void write_file(const std::string& path,
                const std::vector<unsigned char>& buf) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open " + path + " for writing");
  out.write(reinterpret_cast<const char*>(buf.data()),
            static_cast<std::streamsize>(buf.size()));
  if (!out) throw FormatError("short write to " + path);
}

}  // namespace binio

ElectrodeLayout layout_for(const std::string& spec, std::size_t channels) {
  ElectrodeLayout l;
  if (spec.empty()) {
    l = channels == 6 ? builtin_layout("isruc6")
                      : builtin_layout("grid1x" + std::to_string(channels));
  } else if (spec == "isruc6" || spec.rfind("grid", 0) == 0) {
    l = builtin_layout(spec);
  } else {
    l = load_electrode_layout(spec);
  }
  if (l.size() != channels) {
    throw ParameterError("layout has " + std::to_string(l.size()) +
                         " electrodes for " + std::to_string(channels) +
                         " data channels");
  }
  return l;
}

}  // namespace mstgcn
