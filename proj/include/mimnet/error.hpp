#pragma once

#include <stdexcept>
#include <string>

namespace mimnet {

// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error { public: using Error::Error; };
class ContractError : public Error { public: using Error::Error; };
class IoError : public Error { public: using Error::Error; };
class FormatError : public Error { public: using Error::Error; };
class TaskError : public Error { public: using Error::Error; };
class SplitError : public Error { public: using Error::Error; };
class TrainingError : public Error { public: using Error::Error; };
class RoutingError : public Error { public: using Error::Error; };
class ClusteringError : public Error { public: using Error::Error; };
class PredictionError : public Error { public: using Error::Error; };
class ConfigError : public Error { public: using Error::Error; };

}  // namespace mimnet
