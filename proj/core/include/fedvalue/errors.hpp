#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace fedvalue {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// tabular
struct ParseError : Error { using Error::Error; };
struct DuplicateIdError : Error { using Error::Error; };
struct SchemaError : Error { using Error::Error; };
struct DomainError : Error { using Error::Error; };
struct DimensionError : Error { using Error::Error; };
struct PartitionError : Error { using Error::Error; };

// infotheory
struct AlignmentError : Error { using Error::Error; };
struct OverlapError : Error { using Error::Error; };

// shapley
struct ScaleError : Error { using Error::Error; };

// psi / federation
struct SelectionError : Error { using Error::Error; };
struct ProtocolError : Error { using Error::Error; };
struct TransportError : Error { using Error::Error; };

struct MisbehaviorError : Error {
  explicit MisbehaviorError(std::uint64_t query_id, const std::string& what)
      : Error(what), query_id(query_id) {}
  std::uint64_t query_id;
};

}  // namespace fedvalue
