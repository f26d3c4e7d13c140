"""User profile capture: validation of onboarding input and canonical serialization."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

EXPERIENCE_LEVELS = ("novice", "beginner", "intermediate", "experienced")

# Rendered explicitly so output never depends on the process locale.
MONTH_NAMES = (
    "January", "February", "March", "April", "May", "June",
    "July", "August", "September", "October", "November", "December",
)

NOT_SPECIFIED = "not specified"


class ProfileValidationError(ValueError):
    """Onboarding input violated one or more profile invariants.

    Carries a ``(field, message)`` pair for every invalid field, not just the
    first, so a form can surface all problems at once.
    """

    def __init__(self, errors: list[tuple[str, str]]):
        self.errors = errors
        super().__init__("; ".join(f"{field}: {message}" for field, message in errors))


@dataclass(frozen=True)
class UserProfile:
    """The onboarding tuple injected into every agent's system prompt."""

    experience: str
    location: str
    month: int
    cultural_background: str = ""


def validate_profile(raw: Mapping[str, object]) -> UserProfile:
    """Validate raw onboarding input (form fields or CLI flags) into a profile.

    Collects every violation before failing. Cultural background is optional:
    a missing or blank value is stored as the empty string.
    """
    errors: list[tuple[str, str]] = []

    experience = str(raw.get("experience") or "").strip().lower()
    if experience not in EXPERIENCE_LEVELS:
        errors.append(("experience", f"must be one of: {', '.join(EXPERIENCE_LEVELS)}"))

    location = str(raw.get("location") or "").strip()
    if not location:
        errors.append(("location", "must not be empty"))

    month_raw = raw.get("month")
    month = 0
    if month_raw is None or isinstance(month_raw, bool):
        errors.append(("month", "must be an integer between 1 and 12"))
    else:
        try:
            month = int(str(month_raw).strip())
        except ValueError:
            errors.append(("month", "must be an integer between 1 and 12"))
        else:
            if not 1 <= month <= 12:
                errors.append(("month", "must be between 1 and 12"))

    cultural = str(raw.get("cultural_background") or "").strip()

    if errors:
        raise ProfileValidationError(errors)
    return UserProfile(
        experience=experience,
        location=location,
        month=month,
        cultural_background=cultural,
    )


def serialize_profile(profile: UserProfile) -> str:
    """Render the profile as the canonical labeled block appended to agent prompts.

    Pure function: equal profiles yield byte-identical text. An empty cultural
    background renders as the "not specified" sentinel.
    """
    cultural = profile.cultural_background or NOT_SPECIFIED
    return (
        f"Gardener experience level: {profile.experience}\n"
        f"Location: {profile.location}\n"
        f"Current month: {MONTH_NAMES[profile.month - 1]}\n"
        f"Cultural background: {cultural}"
    )


def profile_to_dict(profile: UserProfile) -> dict:
    """Wire/persistence form of a profile (plain JSON-compatible mapping)."""
    return {
        "experience": profile.experience,
        "location": profile.location,
        "month": profile.month,
        "cultural_background": profile.cultural_background,
    }
