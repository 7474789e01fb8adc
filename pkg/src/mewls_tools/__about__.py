# SPDX-FileCopyrightText: 2024 The mewls-tools developers
#
# SPDX-License-Identifier: MIT
__version__ = "0.1.0"
