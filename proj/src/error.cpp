#include "rewrite_lab/error.hpp"

namespace rewrite_lab {

const char* ErrorKindName(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kEmptyUtterance: return "EmptyUtterance";
    case ErrorKind::kParse: return "ParseError";
    case ErrorKind::kSchema: return "SchemaError";
    case ErrorKind::kUnalignable: return "Unalignable";
    case ErrorKind::kCorruptMatrix: return "CorruptMatrix";
    case ErrorKind::kEmptyContext: return "EmptyContext";
    case ErrorKind::kVocab: return "VocabError";
    case ErrorKind::kShape: return "ShapeError";
    case ErrorKind::kDegenerateVector: return "DegenerateVector";
    case ErrorKind::kMissingGold: return "MissingGold";
    case ErrorKind::kVersion: return "VersionError";
    case ErrorKind::kConfig: return "ConfigError";
    case ErrorKind::kIo: return "IoError";
    case ErrorKind::kNumeric: return "NumericError";
  }
  return "Error";
}

}  // namespace rewrite_lab
