#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace arcap {

// Violated precondition (dimension mismatch, empty input, invalid parameter).
class ContractError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Timestamps or frames presented out of order.
class OrderingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operation not allowed in the current lifecycle state (e.g. append to a finalized session).
class StateError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Stored data failed a structural or checksum check.
class IntegrityError : public std::runtime_error {
 public:
  IntegrityError(const std::string& what, std::int64_t frame_index = -1, std::int64_t byte_offset = -1)
      : std::runtime_error(what), frame_index_(frame_index), byte_offset_(byte_offset) {}

  std::int64_t frame_index() const noexcept { return frame_index_; }
  std::int64_t byte_offset() const noexcept { return byte_offset_; }

 private:
  std::int64_t frame_index_;
  std::int64_t byte_offset_;
};

// Malformed wire payload.
class ProtocolError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace arcap
