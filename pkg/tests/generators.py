"""Seeded generators for definitions, values and beans used by property tests.

Everything takes a ``random.Random`` so a failing case is reproducible
from its seed.
"""
from __future__ import annotations

import random
import string

from tiersmith.apidef import Shape, parse_definitions
from tiersmith.beans import new_bean

SCALAR_TYPES = ["CcString", "CcName", "CcNumber", "CcPhone", "CcZip", "CcSsn", "CcCreditCard", "CcEmail"]

# Includes markup characters, non-ASCII and whitespace that must survive the wire.
_TEXT = string.ascii_letters + string.digits + " <>&'\"%+=.;/?#éü中\U0001f600\t\n"


def luhn_check_digit(payload: str) -> str:
    """Digit that makes ``payload + digit`` pass the Luhn test."""
    total = 0
    for i, ch in enumerate(reversed(payload)):
        d = int(ch)
        if i % 2 == 0:  # these positions get doubled once the check digit is appended
            d *= 2
            if d > 9:
                d -= 9
        total += d
    return str((10 - total % 10) % 10)


def digits(rng: random.Random, n: int) -> str:
    return "".join(rng.choice(string.digits) for _ in range(n))


def canonical_value(rng: random.Random, type_name: str) -> str:
    """A valid, non-empty canonical value of a built-in type."""
    if type_name == "CcString":
        text = "".join(rng.choice(_TEXT) for _ in range(rng.randint(1, 12))).strip()
        return text or "x"
    if type_name == "CcName":
        return "".join(rng.choice(string.ascii_lowercase) for _ in range(rng.randint(1, 10)))
    if type_name == "CcNumber":
        return digits(rng, rng.randint(1, 12))
    if type_name == "CcPhone":
        return digits(rng, 10)
    if type_name == "CcZip":
        return digits(rng, rng.choice((5, 9)))
    if type_name == "CcSsn":
        return digits(rng, 9)
    if type_name == "CcCreditCard":
        payload = digits(rng, rng.randint(12, 18))
        return payload + luhn_check_digit(payload)
    if type_name == "CcEmail":
        word = lambda: "".join(rng.choice(string.ascii_lowercase + string.digits) for _ in range(rng.randint(1, 6)))  # noqa: E731
        return f"{word()}@{word()}.{rng.choice(['com', 'org', 'net'])}"
    raise ValueError(type_name)


def raw_value(rng: random.Random, type_name: str) -> str:
    """Messy user input that canonicalizes cleanly."""
    value = canonical_value(rng, type_name)
    if type_name == "CcName":
        value = "".join(c.upper() if rng.random() < 0.5 else c for c in value)
    elif type_name == "CcPhone" and rng.random() < 0.5:
        value = f"({value[:3]}) {value[3:6]}-{value[6:]}"
    elif type_name in ("CcZip", "CcSsn") and len(value) == 9 and rng.random() < 0.5:
        value = value[:5] + "-" + value[5:] if type_name == "CcZip" else f"{value[:3]}-{value[3:5]}-{value[5:]}"
    elif type_name == "CcCreditCard" and rng.random() < 0.5:
        value = " ".join(value[i:i + 4] for i in range(0, len(value), 4))
    elif type_name == "CcEmail" and rng.random() < 0.5:
        value = value.upper()
    if rng.random() < 0.3:
        value = " " + value + " "
    return value


# ---------------------------------------------------------------------------
# Definitions


def random_definitions(rng: random.Random, max_beans: int = 10, max_depth: int = 4) -> str:
    """Document text for a valid random definition set.

    Beans only reference beans with a higher index, so composition and
    extension are acyclic by construction; nesting depth stays within
    ``max_depth``.  Field names are unique across the whole set, so no
    inherited field can collide.
    """
    n = rng.randint(1, max_beans)
    depth = [1] * n
    counter = iter(range(10 ** 6))
    fields: list[list[str]] = [[] for _ in range(n)]
    extends: list = [None] * n
    for i in reversed(range(n)):
        candidates = [j for j in range(i + 1, n) if depth[j] < max_depth]
        if candidates and rng.random() < 0.2:
            extends[i] = rng.choice(candidates)
        d = depth[extends[i]] if extends[i] is not None else 1
        for _ in range(rng.randint(1 if extends[i] is None else 0, 4)):
            name = f"F{next(counter)}"
            roll = rng.random()
            if candidates and roll < 0.25:
                j = rng.choice(candidates)
                fields[i].append(f'<bean name="{name}" type="B{j}"/>')
                d = max(d, depth[j] + 1)
            elif candidates and roll < 0.4:
                j = rng.choice(candidates)
                fields[i].append(f'<vector name="{name}" type="B{j}"/>')
                d = max(d, depth[j] + 1)
            elif roll < 0.5:
                fields[i].append(f'<vector name="{name}" type="{rng.choice(SCALAR_TYPES)}"/>')
            else:
                fields[i].append(f'<param name="{name}" type="{rng.choice(SCALAR_TYPES)}"/>')
        depth[i] = d
    parts = ["<api>"]
    for i in range(n):
        ext = f' extends="B{extends[i]}"' if extends[i] is not None else ""
        parts.append(f'  <bean name="B{i}"{ext}>')
        parts += [f"    {f}" for f in fields[i]]
        parts.append("  </bean>")

    def params(count):
        out = []
        for _ in range(count):
            name = f"P{next(counter)}"
            roll = rng.random()
            if roll < 0.4:
                out.append(f'<bean name="{name}" type="B{rng.randrange(n)}"/>')
            elif roll < 0.55:
                out.append(f'<vector name="{name}" type="B{rng.randrange(n)}"/>')
            elif roll < 0.65:
                out.append(f'<vector name="{name}" type="{rng.choice(SCALAR_TYPES)}"/>')
            else:
                out.append(f'<param name="{name}" type="{rng.choice(SCALAR_TYPES)}"/>')
        return out

    parts.append('  <screen name="S">')
    parts += [f"    {p}" for p in params(rng.randint(1, 4))]
    parts.append("  </screen>")
    parts.append('  <transaction name="T"><request>')
    parts += [f"    {p}" for p in params(rng.randint(0, 3))]
    parts.append("  </request><response>")
    parts += [f"    {p}" for p in params(rng.randint(0, 3))]
    parts.append("  </response></transaction>")
    parts.append('  <request name="H">')
    parts += [f"    {p}" for p in params(rng.randint(0, 3))]
    parts.append("  </request>")
    parts.append("</api>")
    return "\n".join(parts)


def random_api(rng: random.Random, **kw):
    return parse_definitions([random_definitions(rng, **kw)])


# ---------------------------------------------------------------------------
# Values


def fill(rng: random.Random, bean, set_probability: float = 0.7, max_items: int = 3):
    """Populate a bean in place with valid canonical values; returns it."""
    api = bean.api
    for fdef in bean.fields:
        if fdef.shape is Shape.SCALAR:
            if rng.random() < set_probability:
                bean.values[fdef.name] = canonical_value(rng, fdef.type.name)
        elif fdef.shape is Shape.BEAN:
            fill(rng, bean.values[fdef.name], set_probability, max_items)
        else:
            items = []
            for _ in range(rng.randint(0, max_items)):
                if fdef.type.is_bean:
                    items.append(fill(rng, new_bean(api, fdef.type.name), set_probability, max_items))
                else:
                    items.append(canonical_value(rng, fdef.type.name))
            bean.values[fdef.name] = items
    return bean


def random_bean(rng: random.Random, api, body, **kw):
    return fill(rng, new_bean(api, body), **kw)


def random_chain(rng: random.Random, length: int) -> list[tuple[str, str]]:
    classes = ["CcException", "CcApplicationError", "CcSystemError", "CcCommunicationError",
               "CcUnavailable", "PoolExhausted"]
    return [(rng.choice(classes), canonical_value(rng, "CcString")) for _ in range(length)]


# ---------------------------------------------------------------------------
# Page structures

_REGIONS = ["Header", "Content", "Promo", "Footer", "Navigation", "Title"]


def _structure_items(rng: random.Random, api, body, prefix: str, depth: int) -> list[str]:
    out = []
    for fdef in api.fields_of(body):
        prop = f"{prefix}{fdef.name}"
        if fdef.shape is Shape.SCALAR:
            if rng.random() < 0.7:
                out.append(f'<InputField prop="{prop}">{fdef.name}:</InputField>')
            else:
                out.append(f'<Data prop="{prop}"/>')
        elif fdef.shape is Shape.BEAN:
            out += _structure_items(rng, api, api.bean(fdef.type.name), prop + ".", depth + 1)
        elif not fdef.type.is_bean:
            if rng.random() < 0.5:
                out.append(f'<ForEach prop="{prop}"><Data/><If equals="x">*</If></ForEach>')
            else:
                out.append(f'<InputField prop="{prop}.{rng.randrange(3)}">{fdef.name}</InputField>')
        elif depth < 2 and rng.random() < 0.6:
            inner = _structure_items(rng, api, api.bean(fdef.type.name), "", depth + 1)
            out.append(f'<ForEach prop="{prop}">{"".join(inner)}</ForEach>')
        else:
            out += _structure_items(rng, api, api.bean(fdef.type.name), f"{prop}.{rng.randrange(3)}.", depth + 1)
    return out


def random_structure(rng: random.Random, api, screen: str = "S") -> str:
    """A valid page structure for ``screen`` touching every reachable field."""
    items = _structure_items(rng, api, api.screen(screen), "", 0)
    rng.shuffle(items)
    parts = [f'<Screen name="{screen}">']
    while items:
        take = items[: rng.randint(1, 4)]
        items = items[len(take):]
        if rng.random() < 0.5:
            parts.append(f'<Form href="/page/H">{"".join(take)}</Form>')
        else:
            region = rng.choice(_REGIONS)
            parts.append(f"<{region}>{''.join(take)}</{region}>")
    parts.append("</Screen>")
    return "".join(parts)
