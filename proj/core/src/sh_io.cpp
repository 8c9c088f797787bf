#include <fstream>
#include <sstream>

#include <json.hpp>

#include "shlight/errors.hpp"
#include "shlight/sh.hpp"

namespace shlight {

namespace {

const char* domain_name(SHDomain d) {
    return d == SHDomain::radiance ? "radiance" : "irradiance";
}

SHDomain domain_from_name(const std::string& s) {
    if (s == "radiance") return SHDomain::radiance;
    if (s == "irradiance") return SHDomain::irradiance;
    throw parse_error("unknown SH domain \"" + s + "\"");
}

}  // namespace

std::string sh_to_json(const SHCoeffs& c) {
    nlohmann::json j;
    j["order"] = c.order();
    j["convention"] = "real-sh-no-cs";
    j["domain"] = domain_name(c.domain());
    j["channels"] = {"R", "G", "B"};
    nlohmann::json values = nlohmann::json::array();
    for (int ch = 0; ch < 3; ++ch) {
        nlohmann::json row = nlohmann::json::array();
        for (int i = 0; i < c.count(); ++i) row.push_back(c.at(ch, i));
        values.push_back(std::move(row));
    }
    j["values"] = std::move(values);
    return j.dump(2);
}

SHCoeffs sh_from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw parse_error(std::string("SH file is not valid JSON: ") + e.what(), e.byte);
    }
    if (!j.contains("order") || !j.contains("values") || !j.contains("domain"))
        throw parse_error("SH file missing order/domain/values");
    if (j.value("convention", "real-sh-no-cs") != "real-sh-no-cs")
        throw parse_error("unsupported SH convention \"" + j.value("convention", "") + "\"");
    int order = j["order"].get<int>();
    SHCoeffs c(order, domain_from_name(j["domain"].get<std::string>()));
    const auto& values = j["values"];
    if (!values.is_array() || values.size() != 3)
        throw parse_error("SH values must hold three channels");
    for (int ch = 0; ch < 3; ++ch) {
        const auto& row = values[ch];
        if (!row.is_array() || static_cast<int>(row.size()) != c.count())
            throw parse_error("SH channel " + std::to_string(ch) + " must hold " +
                              std::to_string(c.count()) + " values");
        for (int i = 0; i < c.count(); ++i) c.at(ch, i) = row[i].get<double>();
    }
    return c;
}

void save_sh_json(const std::string& path, const SHCoeffs& c) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + path + " for writing");
    f << sh_to_json(c) << "\n";
}

SHCoeffs load_sh_json(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return sh_from_json(ss.str());
}

}  // namespace shlight
