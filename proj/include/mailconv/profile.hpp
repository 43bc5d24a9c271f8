#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>

namespace mailconv {

enum class Gender : std::uint8_t { F, M, Unknown };

/// Teen < 20, YoungAdult 20-35, Adult 36-50, Mature >= 51.
enum class AgeGroup : std::uint8_t { Teen, YoungAdult, Adult, Mature };

AgeGroup age_group_of(int age_years);

std::string_view to_string(Gender g);
std::string_view to_string(AgeGroup g);

struct UserProfile {
  std::string user_id;
  int age_years = 0;
  Gender gender = Gender::Unknown;

  AgeGroup age_group() const { return age_group_of(age_years); }
};

using ProfileMap = std::map<std::string, UserProfile, std::less<>>;

/// Tab- or space-separated "user_id age_years gender" lines, gender in
/// {F, M, U}. '#' comments and blank lines skipped. Throws InputError.
ProfileMap read_profiles(std::istream& in, std::string_view source = "<stream>");
ProfileMap read_profiles(const std::filesystem::path& path);
void write_profiles(std::ostream& out, const ProfileMap& profiles);

inline const UserProfile* find_profile(const ProfileMap& profiles, std::string_view user) {
  auto it = profiles.find(user);
  return it == profiles.end() ? nullptr : &it->second;
}

}  // namespace mailconv
