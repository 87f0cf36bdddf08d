#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "accmer/sampler.hpp"

namespace accmer {

static_assert(std::endian::native == std::endian::little,
              "trace and checkpoint formats are little-endian");

/// One sampler access: which slot a batch touched and whether it came from
/// the cached reuse set.
struct TraceRecord {
  std::uint32_t batch = 0;
  std::uint32_t slot = 0;
  std::uint8_t reuse = 0;
};

/// In-memory access trace plus the sampler parameters needed to group
/// batches into reuse windows. CSV-loaded traces may lack d and b (0).
struct AccessTrace {
  SamplerMode mode = SamplerMode::uniform;
  std::uint32_t d = 0;
  std::uint32_t b = 0;
  std::vector<TraceRecord> records;
};

// Binary trace layout (little-endian):
//   offset 0: magic "ACTR"
//   offset 4: u16 version (1)
//   offset 6: u8 mode (0 uniform, 1 prioritized, 2 accmer)
//   offset 7: u8 reserved (0)
//   offset 8: u32 d (buffer capacity), u32 b (batch size)
//   offset 16: records, 9 bytes each: u32 batch, u32 slot, u8 reuse
inline constexpr char kTraceMagic[4] = {'A', 'C', 'T', 'R'};
inline constexpr std::uint16_t kTraceVersion = 1;

class TraceWriter {
 public:
  TraceWriter(const std::string& path, SamplerMode mode, std::uint32_t d, std::uint32_t b)
      : out_(path, std::ios::binary) {
    if (!out_) throw std::runtime_error("cannot open trace file for writing: " + path);
    out_.write(kTraceMagic, 4);
    write_u16(kTraceVersion);
    const std::uint8_t m = static_cast<std::uint8_t>(mode);
    const std::uint8_t zero = 0;
    out_.write(reinterpret_cast<const char*>(&m), 1);
    out_.write(reinterpret_cast<const char*>(&zero), 1);
    write_u32(d);
    write_u32(b);
  }

  void append(std::uint32_t batch, std::uint32_t slot, std::uint8_t reuse) {
    write_u32(batch);
    write_u32(slot);
    out_.write(reinterpret_cast<const char*>(&reuse), 1);
  }

  /// Reuse-set slots first (flag 1), then the fresh draws (flag 0).
  void append_batch(std::uint32_t batch_number, const SampleBatch& b) {
    for (std::uint32_t s : b.reuse) append(batch_number, s, 1);
    for (std::uint32_t s : b.fresh) append(batch_number, s, 0);
  }

  void close() {
    out_.flush();
    out_.close();
    if (out_.fail()) throw std::runtime_error("trace write failed");
  }

 private:
  void write_u16(std::uint16_t v) { out_.write(reinterpret_cast<const char*>(&v), 2); }
  void write_u32(std::uint32_t v) { out_.write(reinterpret_cast<const char*>(&v), 4); }
  std::ofstream out_;
};

/// CSV form: optional '#' comment lines, optional "batch,slot,reuse" header,
/// then one "batch,slot,reuse" row per record. d is inferred as max slot + 1;
/// b is unknown (0), so window statistics are unavailable.
inline AccessTrace load_trace_csv(std::istream& in) {
  AccessTrace t;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (line.rfind("batch", 0) == 0) continue;  // column header
    std::istringstream row(line);
    std::string field;
    TraceRecord r;
    if (!std::getline(row, field, ',')) throw std::runtime_error("malformed trace row: " + line);
    r.batch = static_cast<std::uint32_t>(std::stoul(field));
    if (!std::getline(row, field, ',')) throw std::runtime_error("malformed trace row: " + line);
    r.slot = static_cast<std::uint32_t>(std::stoul(field));
    if (!std::getline(row, field, ',')) throw std::runtime_error("malformed trace row: " + line);
    r.reuse = static_cast<std::uint8_t>(std::stoul(field));
    t.records.push_back(r);
    t.d = std::max(t.d, r.slot + 1);
  }
  return t;
}

/// Loads a trace file, sniffing the binary magic and falling back to CSV.
inline AccessTrace load_trace(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open trace file: " + path);
  char magic[4] = {};
  in.read(magic, 4);
  if (in.gcount() == 4 && std::memcmp(magic, kTraceMagic, 4) == 0) {
    AccessTrace t;
    std::uint16_t version = 0;
    std::uint8_t mode = 0, reserved = 0;
    in.read(reinterpret_cast<char*>(&version), 2);
    in.read(reinterpret_cast<char*>(&mode), 1);
    in.read(reinterpret_cast<char*>(&reserved), 1);
    in.read(reinterpret_cast<char*>(&t.d), 4);
    in.read(reinterpret_cast<char*>(&t.b), 4);
    if (!in || version != kTraceVersion)
      throw std::runtime_error("unsupported trace version in " + path);
    if (mode > 2) throw std::runtime_error("malformed trace header in " + path);
    t.mode = static_cast<SamplerMode>(mode);
    TraceRecord r;
    while (true) {
      char rec[9];
      in.read(rec, 9);
      if (in.gcount() == 0 && in.eof()) break;
      if (in.gcount() != 9) throw std::runtime_error("truncated trace record in " + path);
      std::memcpy(&r.batch, rec, 4);
      std::memcpy(&r.slot, rec + 4, 4);
      r.reuse = static_cast<std::uint8_t>(rec[8]);
      t.records.push_back(r);
    }
    return t;
  }
  in.clear();
  in.seekg(0);
  return load_trace_csv(in);
}

}  // namespace accmer
