#pragma once

#include <stdexcept>
#include <string>

namespace htmllstm {

// Base for every failure raised by the library. Each subclass names one
// failure kind so callers can catch precisely.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class UnparsableHtml : public Error { public: using Error::Error; };
class UnknownTagger : public Error { public: using Error::Error; };
class CorpusFormatError : public Error { public: using Error::Error; };
class EmptyCorpus : public Error { public: using Error::Error; };
class IndexOutOfRange : public Error { public: using Error::Error; };
class ShapeMismatch : public Error { public: using Error::Error; };
class NonDeterministicLoss : public Error { public: using Error::Error; };
class InvalidDistribution : public Error { public: using Error::Error; };
class ZeroCount : public Error { public: using Error::Error; };
class EmptyBatch : public Error { public: using Error::Error; };
class LengthMismatch : public Error { public: using Error::Error; };
class TooFewSources : public Error { public: using Error::Error; };
class DivergedLoss : public Error { public: using Error::Error; };
class ClassMismatch : public Error { public: using Error::Error; };
class UnknownClass : public Error { public: using Error::Error; };
class DuplicateTableId : public Error { public: using Error::Error; };
class IoFailure : public Error { public: using Error::Error; };
class ConfigError : public Error { public: using Error::Error; };

}  // namespace htmllstm
