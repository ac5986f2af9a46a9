#pragma once

#include <stdexcept>
#include <string>

namespace spdseq {

/// Base class for all errors raised by this library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Geometry / linear algebra
class NotSpd : public Error { public: using Error::Error; };
class NonConvergence : public Error { public: using Error::Error; };
class DimensionMismatch : public Error { public: using Error::Error; };
class Overflow : public Error { public: using Error::Error; };
class EmptyInput : public Error { public: using Error::Error; };

// Tokenization
class NotTriangularLength : public Error { public: using Error::Error; };

// Signal pipeline
class DegenerateSignal : public Error { public: using Error::Error; };
class DegenerateSegment : public Error { public: using Error::Error; };
class InvalidBand : public Error { public: using Error::Error; };
class CorruptCache : public Error { public: using Error::Error; };
class VersionMismatch : public Error { public: using Error::Error; };

// Autodiff / model
class ShapeMismatch : public Error { public: using Error::Error; };
class InvalidEps : public Error { public: using Error::Error; };
class NonScalarLoss : public Error { public: using Error::Error; };
class StaleTape : public Error { public: using Error::Error; };
class SequenceTooLong : public Error { public: using Error::Error; };
class InvalidChunking : public Error { public: using Error::Error; };

// Harness
class RecordingTooShort : public Error { public: using Error::Error; };
class MissingClass : public Error { public: using Error::Error; };

// Configuration / IO
class ConfigError : public Error { public: using Error::Error; };
class IoError : public Error { public: using Error::Error; };

} // namespace spdseq
