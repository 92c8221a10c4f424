"""
Network descriptions.

A ``NetworkSpec`` is an ordered layer plan plus its input and output shapes. It is
plain data: it serializes to a small key-value text file and is turned into a torch
module by ``dfms.nets.builder.build_network``.
"""

from typing import Dict, List, Literal, Tuple

from pydantic import BaseModel, ConfigDict, model_validator

from dfms.core.errors import InvariantError

Role = Literal["generator", "discriminator", "clone", "victim"]
LayerKind = Literal["conv", "convt", "linear", "flatten", "maxpool", "avgpool", "resblock"]
Norm = Literal["none", "batch"]
Activation = Literal["none", "relu", "leaky_relu", "tanh", "sigmoid"]

# Output activation each role must end with
ROLE_OUTPUT_ACTIVATION: Dict[str, str] = {
    "generator": "tanh",
    "discriminator": "sigmoid",
    "clone": "none",
    "victim": "none",
}

_LAYER_KEYS = {"out": "out", "k": "kernel", "s": "stride", "p": "padding", "norm": "norm", "act": "act"}


class LayerSpec(BaseModel):
    """One layer of a plan. ``out`` is channels (conv kinds) or width (linear)."""

    model_config = ConfigDict(frozen=True)

    kind: LayerKind
    out: int = 0
    kernel: int = 3
    stride: int = 1
    padding: int = 0
    norm: Norm = "none"
    act: Activation = "none"

    def to_text(self) -> str:
        return (
            f"{self.kind} out={self.out} k={self.kernel} s={self.stride} "
            f"p={self.padding} norm={self.norm} act={self.act}"
        )

    @classmethod
    def from_text(cls, text: str) -> "LayerSpec":
        kind, *pairs = text.split()
        fields: Dict[str, object] = {"kind": kind}
        for pair in pairs:
            key, _, value = pair.partition("=")
            if key not in _LAYER_KEYS:
                raise InvariantError(f"unknown layer attribute '{key}' in '{text}'")
            name = _LAYER_KEYS[key]
            fields[name] = value if name in ("norm", "act") else int(value)
        return cls(**fields)


class NetworkSpec(BaseModel):
    """Architecture of a generator, discriminator, clone or victim."""

    model_config = ConfigDict(frozen=True)

    role: Role
    input_shape: Tuple[int, ...]
    output_shape: Tuple[int, ...]
    layers: List[LayerSpec]

    @model_validator(mode="after")
    def check_output_activation(self) -> "NetworkSpec":
        if not self.layers:
            raise ValueError("layer plan is empty")
        expected = ROLE_OUTPUT_ACTIVATION[self.role]
        last_act = next((layer.act for layer in reversed(self.layers) if layer.kind != "flatten"), "none")
        if last_act != expected:
            raise ValueError(
                f"{self.role} output activation must be '{expected}', plan ends with '{last_act}'"
            )
        return self

    def to_text(self) -> str:
        lines = [
            f"role = {self.role}",
            f"input_shape = {','.join(map(str, self.input_shape))}",
            f"output_shape = {','.join(map(str, self.output_shape))}",
        ]
        lines += [f"layer.{i} = {layer.to_text()}" for i, layer in enumerate(self.layers)]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "NetworkSpec":
        fields: Dict[str, str] = {}
        layers: Dict[int, LayerSpec] = {}
        for line in text.splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, _, value = line.partition("=")
            key, value = key.strip(), value.strip()
            if key.startswith("layer."):
                layers[int(key.split(".", 1)[1])] = LayerSpec.from_text(value)
            else:
                fields[key] = value

        def _shape(raw: str) -> Tuple[int, ...]:
            return tuple(int(x) for x in raw.split(",") if x)

        try:
            return cls(
                role=fields["role"],
                input_shape=_shape(fields["input_shape"]),
                output_shape=_shape(fields["output_shape"]),
                layers=[layers[i] for i in sorted(layers)],
            )
        except KeyError as e:
            raise InvariantError(f"network spec text is missing '{e.args[0]}'") from None


def _conv_out(size: int, kernel: int, stride: int, padding: int) -> int:
    return (size + 2 * padding - kernel) // stride + 1


def _convt_out(size: int, kernel: int, stride: int, padding: int) -> int:
    return (size - 1) * stride - 2 * padding + kernel


def infer_shapes(spec: NetworkSpec) -> List[Tuple[int, ...]]:
    """Propagate ``input_shape`` through the plan.

    A 1-d input feeding a conv layer is treated as ``(features, 1, 1)``.

    Returns:
        Per-sample shape after each layer

    Raises:
        InvariantError: a layer cannot accept its input, or the final shape
            differs from ``output_shape``
    """
    shape: Tuple[int, ...] = tuple(spec.input_shape)
    shapes: List[Tuple[int, ...]] = []
    for i, layer in enumerate(spec.layers):
        where = f"layer {i} ({layer.kind})"
        if layer.kind in ("conv", "convt", "maxpool", "avgpool", "resblock"):
            if len(shape) == 1 and layer.kind in ("conv", "convt"):
                shape = (shape[0], 1, 1)
            if len(shape) != 3:
                raise InvariantError(f"{where} needs a (C, H, W) input, got {shape}")
            c, h, w = shape
            if layer.kind == "conv":
                shape = (layer.out, _conv_out(h, layer.kernel, layer.stride, layer.padding),
                         _conv_out(w, layer.kernel, layer.stride, layer.padding))
            elif layer.kind == "convt":
                shape = (layer.out, _convt_out(h, layer.kernel, layer.stride, layer.padding),
                         _convt_out(w, layer.kernel, layer.stride, layer.padding))
            elif layer.kind == "resblock":
                shape = (layer.out, _conv_out(h, 3, layer.stride, 1), _conv_out(w, 3, layer.stride, 1))
            else:
                shape = (c, _conv_out(h, layer.kernel, layer.kernel, 0),
                         _conv_out(w, layer.kernel, layer.kernel, 0))
            if layer.kind in ("conv", "convt", "resblock") and layer.out <= 0:
                raise InvariantError(f"{where} needs out > 0")
        elif layer.kind == "flatten":
            size = 1
            for d in shape:
                size *= d
            shape = (size,)
        elif layer.kind == "linear":
            if len(shape) != 1:
                raise InvariantError(f"{where} needs a flat input, got {shape}; add a flatten layer")
            if layer.out <= 0:
                raise InvariantError(f"{where} needs out > 0")
            shape = (layer.out,)
        if any(d <= 0 for d in shape):
            raise InvariantError(f"{where} produces a non-positive shape {shape}")
        shapes.append(shape)

    if shape != tuple(spec.output_shape):
        raise InvariantError(
            f"{spec.role} plan produces {shape}, declared output_shape is {tuple(spec.output_shape)}"
        )
    return shapes
