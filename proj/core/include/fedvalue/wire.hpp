#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "fedvalue/errors.hpp"
#include "fedvalue/infotheory.hpp"
#include "fedvalue/psi.hpp"

namespace fedvalue {

inline constexpr std::uint8_t kProtocolVersion = 0x01;

enum class MsgTag : std::uint8_t {
  Hello = 0x01,           // payload: version byte
  QueryAnnounce = 0x02,   // payload: q, then role list of participating parties
  CellQuery = 0x03,       // payload: ValueAssignment
  SelectionStatus = 0x04, // payload: 1 byte, 0 = empty, 1 = has samples
  Proceed = 0x05,
  Cancel = 0x06,
  FlatSet = 0x07,         // payload: count-prefixed digests
  Grouping = 0x08,        // payload: count-prefixed (token, q digests) records
  Iinter = 0x09,          // payload: count-prefixed digests
  Cardinality = 0x0A,     // payload: i64
  Validation = 0x0B,      // payload: i64
  Shutdown = 0x0C,
};

struct ProtocolMessage {
  MsgTag tag = MsgTag::Hello;
  std::uint64_t query_id = 0;
  std::vector<std::uint8_t> payload;

  bool operator==(const ProtocolMessage&) const = default;
};

/// Frame layout: 4-byte big-endian length of (tag + query_id + payload),
/// 1-byte tag, 8-byte big-endian query_id, payload.
std::vector<std::uint8_t> encode_frame(const ProtocolMessage& msg);

/// Decodes one complete frame; throws ProtocolError on truncation or a
/// length mismatch.
ProtocolMessage decode_frame(std::span<const std::uint8_t> frame);

class ByteWriter {
 public:
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u16(std::uint16_t v);
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void i64(std::int64_t v) { u64(static_cast<std::uint64_t>(v)); }
  void digest(const EncryptedId& id);
  void digest_list(const std::vector<EncryptedId>& ids);
  void assignment(const ValueAssignment& a);
  void grouping(const std::map<GroupToken, std::vector<EncryptedId>>& groups);

  std::vector<std::uint8_t> take() { return std::move(buf_); }

 private:
  std::vector<std::uint8_t> buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> data) : data_(data) {}

  std::uint8_t u8();
  std::uint16_t u16();
  std::uint32_t u32();
  std::uint64_t u64();
  std::int64_t i64() { return static_cast<std::int64_t>(u64()); }
  EncryptedId digest();
  std::vector<EncryptedId> digest_list();
  ValueAssignment assignment();
  std::map<GroupToken, std::vector<EncryptedId>> grouping();
  bool done() const { return pos_ == data_.size(); }

 private:
  void need(std::size_t n) const;
  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
};

}  // namespace fedvalue
