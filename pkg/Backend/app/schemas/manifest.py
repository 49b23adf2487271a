from typing import Optional, Union

from pydantic import BaseModel, Field, RootModel, field_validator

CovariateField = Optional[Union[bool, int, float, str]]


class ManifestEntry(BaseModel):
    id: str = Field(min_length=1)
    path: str
    covariates: dict[str, CovariateField] = {}


class Manifest(RootModel[list[ManifestEntry]]):
    """The manifest file is a bare JSON array of entries."""

    @field_validator("root")
    @classmethod
    def _unique_ids(cls, value: list[ManifestEntry]) -> list[ManifestEntry]:
        seen = set()
        for entry in value:
            if entry.id in seen:
                raise ValueError(f"duplicate shape id '{entry.id}'")
            seen.add(entry.id)
        return value

    @property
    def shapes(self) -> list[ManifestEntry]:
        return self.root
