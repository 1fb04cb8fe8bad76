# SPDX-License-Identifier: Apache-2.0
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
# http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""DoRF: Doppler radiance fields for Wi-Fi CSI activity recognition."""

from ._dorf import (
    ConfigError,
    DataError,
    NumericError,
    config_text,
    factorize,
    gen_motion,
    gestures,
    loso,
    pipeline,
    pooled_features,
    project_dorf,
    radial_velocity_matrix,
    read_csi,
    sanitize,
    sphere_grid,
    synth,
    wavelength,
    write_csi,
)

__all__ = [
    "ConfigError",
    "DataError",
    "NumericError",
    "config_text",
    "factorize",
    "gen_motion",
    "gestures",
    "loso",
    "pipeline",
    "pooled_features",
    "project_dorf",
    "radial_velocity_matrix",
    "read_csi",
    "sanitize",
    "sphere_grid",
    "synth",
    "wavelength",
    "write_csi",
]
