#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace dramaturg {

enum class ErrorCode {
  InvalidLogLine,
  InvalidInput,
  EmptySlot,
  UnknownSlot,
  ParseError,
  UnknownPlaceholder,
  MissingPlaceholder,
  MissingFamily,
  EmptyCharacterList,
  BackendUnavailable,
  BackendRejected,
  ContextOverflow,
  UpstreamMissing,
  LoopUnresolved,
  UnparseableEdit,
  EmptyTitle,
  NoCharactersFound,
  NoScenesFound,
  MalformedScene,
  EmptyOriginal,
  EmptyInput,
  IncompleteSession,
  SerializationError,
  VersionMismatch,
  Busy,
};

std::string_view to_string(ErrorCode code);

/// Single exception type for every engine failure. `subject` names the thing
/// the error is about (a slot address, a scene ordinal, a placeholder) and
/// `items` carries lists such as the missing slots of an incomplete session.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, std::string message, std::string subject = {},
        std::vector<std::string> items = {})
      : std::runtime_error(std::move(message)),
        code_(code),
        subject_(std::move(subject)),
        items_(std::move(items)) {}

  ErrorCode code() const noexcept { return code_; }
  const std::string& subject() const noexcept { return subject_; }
  const std::vector<std::string>& items() const noexcept { return items_; }

  /// Slot the failure happened in, when raised from a pipeline step.
  const std::string& slot() const noexcept { return slot_; }
  void set_slot(std::string slot) { slot_ = std::move(slot); }

 private:
  ErrorCode code_;
  std::string subject_;
  std::vector<std::string> items_;
  std::string slot_;
};

}  // namespace dramaturg
