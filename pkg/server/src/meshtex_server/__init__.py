"""Reference backend service for the meshtex view-synthesis protocol.

Speaks the wire contract documented in the repository's
docs/protocol.md: POST /v1/generate with depth, init image, and a
4-label region mask; GET /v1/health. The service and the texturing
client share nothing but that contract -- this package deliberately has
no dependency on the client package.

The default model is a deterministic procedural shader, good for
integration tests and protocol work. Attaching a real depth-conditioned
diffusion pipeline is a matter of implementing one `generate` method;
see models.py and the README.
"""

__version__ = "0.1.0"
