#pragma once

#include <chrono>
#include <memory>
#include <string>

#include <httplib.h>

#include "dmd/error.hpp"

namespace dmd::http {

/// "https://host:port/v1" -> origin "https://host:port", path "/v1".
struct Url {
    std::string origin;
    std::string path;
};

inline Url split_url(const std::string& url) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) throw ConfigError("URL lacks a scheme: " + url);
    const auto path_start = url.find('/', scheme_end + 3);
    Url u;
    u.origin = url.substr(0, path_start);
    u.path = path_start == std::string::npos ? "" : url.substr(path_start);
    while (!u.path.empty() && u.path.back() == '/') u.path.pop_back();
    return u;
}

inline std::unique_ptr<httplib::Client> make_client(const std::string& origin,
                                                    std::chrono::milliseconds timeout) {
#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
    if (origin.rfind("https://", 0) == 0)
        throw ConfigError("https URL given but this build has no TLS support: " + origin);
#endif
    auto cli = std::make_unique<httplib::Client>(origin);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(timeout);
    const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(timeout - secs);
    cli->set_connection_timeout(secs.count(), usecs.count());
    cli->set_read_timeout(secs.count(), usecs.count());
    cli->set_write_timeout(secs.count(), usecs.count());
    return cli;
}

/// Raises the backend error class matching an httplib transport failure.
[[noreturn]] inline void throw_transport(httplib::Error err, const std::string& what) {
    const auto msg = what + ": " + httplib::to_string(err);
    if (err == httplib::Error::ConnectionTimeout || err == httplib::Error::Read ||
        err == httplib::Error::Write)
        throw TimeoutError(msg);
    throw TransportError(msg);
}

}  // namespace dmd::http
