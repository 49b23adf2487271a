from typing import Annotated, Any

import numpy as np
from pydantic import BeforeValidator


def _to_list(value: Any) -> Any:
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, tuple):
        return list(value)
    return value


# numpy arrays are accepted wherever these list types appear
FloatList = Annotated[list[float], BeforeValidator(_to_list)]
Matrix = Annotated[list[list[float]], BeforeValidator(_to_list)]
Tensor3 = Annotated[list[list[list[float]]], BeforeValidator(_to_list)]
