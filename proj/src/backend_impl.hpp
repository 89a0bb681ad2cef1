#pragma once

#include <memory>
#include <string>

#include "a2r2/backend.hpp"

namespace a2r2::backend::detail {

std::unique_ptr<Endpoint> make_http_endpoint(const std::string& uri, const BackendSettings& settings);

}  // namespace a2r2::backend::detail
