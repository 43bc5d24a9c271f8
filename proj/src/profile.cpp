#include "mailconv/profile.hpp"

#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "mailconv/error.hpp"

namespace mailconv {

AgeGroup age_group_of(int age_years) {
  if (age_years < 20) return AgeGroup::Teen;
  if (age_years <= 35) return AgeGroup::YoungAdult;
  if (age_years <= 50) return AgeGroup::Adult;
  return AgeGroup::Mature;
}

std::string_view to_string(Gender g) {
  switch (g) {
    case Gender::F: return "F";
    case Gender::M: return "M";
    case Gender::Unknown: return "U";
  }
  return "U";
}

std::string_view to_string(AgeGroup g) {
  switch (g) {
    case AgeGroup::Teen: return "teen";
    case AgeGroup::YoungAdult: return "young_adult";
    case AgeGroup::Adult: return "adult";
    case AgeGroup::Mature: return "mature";
  }
  return "teen";
}

ProfileMap read_profiles(std::istream& in, std::string_view source) {
  ProfileMap out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    std::istringstream fields(line);
    std::string id, age, gender;
    if (!(fields >> id) || id.front() == '#') continue;
    const auto where = std::string(source) + ":" + std::to_string(n) + ": ";
    if (!(fields >> age >> gender)) throw InputError(where + "expected 'user_id age gender'");
    UserProfile p;
    p.user_id = id;
    auto [ptr, ec] = std::from_chars(age.data(), age.data() + age.size(), p.age_years);
    if (ec != std::errc{} || ptr != age.data() + age.size() || p.age_years < 0)
      throw InputError(where + "bad age '" + age + "'");
    if (gender == "F" || gender == "f")
      p.gender = Gender::F;
    else if (gender == "M" || gender == "m")
      p.gender = Gender::M;
    else if (gender == "U" || gender == "u")
      p.gender = Gender::Unknown;
    else
      throw InputError(where + "bad gender '" + gender + "'");
    if (!out.emplace(id, std::move(p)).second) throw InputError(where + "duplicate user '" + id + "'");
  }
  return out;
}

ProfileMap read_profiles(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open profiles file " + path.string());
  return read_profiles(in, path.string());
}

void write_profiles(std::ostream& out, const ProfileMap& profiles) {
  for (const auto& [id, p] : profiles) out << id << '\t' << p.age_years << '\t' << to_string(p.gender) << '\n';
}

}  // namespace mailconv
