// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>

#include "json.hpp"
#include "saeforge/completion.hpp"

namespace saeforge::detail {

// POSTs a JSON body with bearer auth, retrying transport failures, 429 and
// 5xx responses with exponential backoff. Throws ClientError once retries are
// exhausted or on any other non-2xx status.
nlohmann::json post_json(const HttpEndpoint& endpoint, const nlohmann::json& body);

}  // namespace saeforge::detail
