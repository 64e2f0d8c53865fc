#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <memory>
#include <string>

#include "dmd/dmd.hpp"

namespace dmd::fixtures {

inline std::string data_path(const std::string& name) { return std::string(DMD_TEST_DATA) + "/" + name; }

/// Scratch directory removed on destruction.
class TempDir {
public:
    TempDir() {
        static std::atomic<int> counter{0};
        const auto stamp = std::chrono::steady_clock::now().time_since_epoch().count();
        path_ = std::filesystem::temp_directory_path() /
                ("dmd-test-" + std::to_string(stamp) + "-" + std::to_string(counter++));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    std::string file(const std::string& name) const { return (path_ / name).string(); }
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

inline std::shared_ptr<MockBackend> fixture_mock() {
    return std::make_shared<MockBackend>(
        MockBackend::rules_from_json(json::parse(util::read_file(data_path("mock_fixture20.json")))));
}

inline constexpr std::size_t kFixtureDim = 16;
inline constexpr std::uint64_t kFixtureSeed = 7;

/// Full pipeline over the 20-sample fixture: test encoder, identity heads,
/// offline dictionary, and `backend` behind a gateway with no backoff.
inline Pipeline fixture_pipeline(std::shared_ptr<LlmBackend> backend, const Dataset& store_data) {
    Pipeline p;
    GatewayOptions go;
    go.backoff_base = std::chrono::milliseconds(0);
    p.gateway = std::make_shared<Gateway>(std::move(backend), go);
    auto encoder = std::make_shared<TestEncoder>(kFixtureDim, kFixtureSeed);
    p.encoder = encoder;
    p.weights = HeadWeights::identity(kFixtureDim);
    p.store = std::make_shared<Datastore>(build_store_from_dataset(store_data, *encoder, p.weights));
    auto dict = std::make_shared<OfflineDictionary>(OfflineDictionary::load(data_path("dictionary.jsonl")));
    p.lemmatizer = Lemmatizer(*dict->lemma_set());
    p.dictionary = dict;
    return p;
}

}  // namespace dmd::fixtures
