#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "a2r2/image.hpp"
#include "a2r2/latex.hpp"

namespace a2r2 {

struct Instance {
    std::string id;
    RasterImage image;
    std::optional<LatexDoc> ground_truth;  // absent in pure-inference mode
};

struct RecordLoadError {
    std::size_t line;
    std::string id;
    std::string message;
};

struct Dataset {
    std::vector<Instance> instances;
    std::vector<RecordLoadError> errors;  // per-record failures (e.g. missing image)
};

// JSON-Lines: {"id": str, "image": relative PNG path, "latex": str (optional)}.
// Image paths resolve against the dataset file's directory. A malformed line
// throws DatasetError naming the line; a missing image is collected in errors.
Dataset load_dataset(const std::filesystem::path& path);

}  // namespace a2r2
