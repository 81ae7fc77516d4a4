#pragma once

#include <stdexcept>
#include <string>

namespace re3 {

// Every error raised by the library carries a stable kind name so the CLI can
// report it and map it onto an exit code.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& message, bool validation)
      : std::runtime_error(kind + ": " + message),
        kind_(std::move(kind)),
        validation_(validation) {}

  const std::string& kind() const noexcept { return kind_; }

  // Validation errors stem from bad input (config, files, arguments).
  bool is_validation() const noexcept { return validation_; }

 private:
  std::string kind_;
  bool validation_;
};

#define RE3_DEFINE_ERROR(Name, validation)                              \
  class Name : public Error {                                           \
   public:                                                              \
    explicit Name(const std::string& message)                           \
        : Error(#Name, message, validation) {}                          \
  }

// tensor-core
RE3_DEFINE_ERROR(ShapeMismatch, false);
RE3_DEFINE_ERROR(TokenOutOfRange, false);
RE3_DEFINE_ERROR(EmptySequence, false);
RE3_DEFINE_ERROR(NonScalarLoss, false);

// tokenizer
RE3_DEFINE_ERROR(EmptyCorpus, true);

// model-zoo
RE3_DEFINE_ERROR(BadImageShape, true);
RE3_DEFINE_ERROR(ContextOverflow, true);
RE3_DEFINE_ERROR(CheckpointError, true);

// re3-trainer
RE3_DEFINE_ERROR(FrozenSetViolation, true);
RE3_DEFINE_ERROR(NegativeLambda, true);
RE3_DEFINE_ERROR(EmptyTermWithPositiveAlpha, true);
RE3_DEFINE_ERROR(NoGradients, false);
RE3_DEFINE_ERROR(MissingSampleKind, true);
RE3_DEFINE_ERROR(ConfigError, true);

// radex-synth
RE3_DEFINE_ERROR(ConflictingFindings, true);
RE3_DEFINE_ERROR(ClientFailure, false);
RE3_DEFINE_ERROR(BadProportions, true);
RE3_DEFINE_ERROR(CorpusFormatError, true);

// eval-suite
RE3_DEFINE_ERROR(EmbedderMissing, true);
RE3_DEFINE_ERROR(MissingComponent, true);
RE3_DEFINE_ERROR(DegenerateLabels, true);

// cli
RE3_DEFINE_ERROR(UnknownCommand, true);
RE3_DEFINE_ERROR(MissingConfig, true);
RE3_DEFINE_ERROR(MissingArtifact, true);

#undef RE3_DEFINE_ERROR

}  // namespace re3
