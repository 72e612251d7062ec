#include "fedvalue/wire.hpp"

#include <cstring>

namespace fedvalue {

std::vector<std::uint8_t> encode_frame(const ProtocolMessage& msg) {
  const std::uint32_t body_len =
      static_cast<std::uint32_t>(1 + 8 + msg.payload.size());
  std::vector<std::uint8_t> out;
  out.reserve(4 + body_len);
  for (int i = 3; i >= 0; --i) out.push_back((body_len >> (8 * i)) & 0xff);
  out.push_back(static_cast<std::uint8_t>(msg.tag));
  for (int i = 7; i >= 0; --i) out.push_back((msg.query_id >> (8 * i)) & 0xff);
  out.insert(out.end(), msg.payload.begin(), msg.payload.end());
  return out;
}

ProtocolMessage decode_frame(std::span<const std::uint8_t> frame) {
  if (frame.size() < 13) throw ProtocolError("truncated frame");
  std::uint32_t body_len = 0;
  for (int i = 0; i < 4; ++i) body_len = (body_len << 8) | frame[i];
  if (frame.size() != 4 + static_cast<std::size_t>(body_len) || body_len < 9) {
    throw ProtocolError("frame length mismatch");
  }
  ProtocolMessage msg;
  msg.tag = static_cast<MsgTag>(frame[4]);
  std::uint64_t qid = 0;
  for (int i = 5; i < 13; ++i) qid = (qid << 8) | frame[i];
  msg.query_id = qid;
  msg.payload.assign(frame.begin() + 13, frame.end());
  return msg;
}

void ByteWriter::u16(std::uint16_t v) {
  u8((v >> 8) & 0xff);
  u8(v & 0xff);
}

void ByteWriter::u32(std::uint32_t v) {
  for (int i = 3; i >= 0; --i) u8((v >> (8 * i)) & 0xff);
}

void ByteWriter::u64(std::uint64_t v) {
  for (int i = 7; i >= 0; --i) u8((v >> (8 * i)) & 0xff);
}

void ByteWriter::digest(const EncryptedId& id) {
  buf_.insert(buf_.end(), id.bytes.begin(), id.bytes.end());
}

void ByteWriter::digest_list(const std::vector<EncryptedId>& ids) {
  u32(static_cast<std::uint32_t>(ids.size()));
  for (const auto& id : ids) digest(id);
}

void ByteWriter::assignment(const ValueAssignment& a) {
  u32(static_cast<std::uint32_t>(a.entries.size()));
  for (const auto& e : a.entries) {
    u32(static_cast<std::uint32_t>(e.party_id));
    u32(static_cast<std::uint32_t>(e.column));
    u32(e.code);
  }
}

void ByteWriter::grouping(
    const std::map<GroupToken, std::vector<EncryptedId>>& groups) {
  u32(static_cast<std::uint32_t>(groups.size()));
  for (const auto& [token, members] : groups) {
    digest(token);
    u32(static_cast<std::uint32_t>(members.size()));
    for (const auto& m : members) digest(m);
  }
}

void ByteReader::need(std::size_t n) const {
  if (pos_ + n > data_.size()) throw ProtocolError("payload underrun");
}

std::uint8_t ByteReader::u8() {
  need(1);
  return data_[pos_++];
}

std::uint16_t ByteReader::u16() {
  std::uint16_t v = u8();
  return static_cast<std::uint16_t>((v << 8) | u8());
}

std::uint32_t ByteReader::u32() {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v = (v << 8) | u8();
  return v;
}

std::uint64_t ByteReader::u64() {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v = (v << 8) | u8();
  return v;
}

EncryptedId ByteReader::digest() {
  need(32);
  EncryptedId id;
  std::memcpy(id.bytes.data(), data_.data() + pos_, 32);
  pos_ += 32;
  return id;
}

std::vector<EncryptedId> ByteReader::digest_list() {
  const std::uint32_t n = u32();
  std::vector<EncryptedId> ids;
  ids.reserve(n);
  for (std::uint32_t i = 0; i < n; ++i) ids.push_back(digest());
  return ids;
}

ValueAssignment ByteReader::assignment() {
  const std::uint32_t n = u32();
  ValueAssignment a;
  for (std::uint32_t i = 0; i < n; ++i) {
    const int party = static_cast<int>(u32());
    const int column = static_cast<int>(u32());
    const std::uint32_t code = u32();
    a.add(party, column, code);
  }
  return a;
}

std::map<GroupToken, std::vector<EncryptedId>> ByteReader::grouping() {
  const std::uint32_t n = u32();
  std::map<GroupToken, std::vector<EncryptedId>> groups;
  for (std::uint32_t i = 0; i < n; ++i) {
    GroupToken token = digest();
    const std::uint32_t m = u32();
    std::vector<EncryptedId> members;
    members.reserve(m);
    for (std::uint32_t j = 0; j < m; ++j) members.push_back(digest());
    groups.emplace(token, std::move(members));
  }
  return groups;
}

}  // namespace fedvalue
