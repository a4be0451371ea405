"""textsplat: text-prompted 3D scene synthesis with Gaussian splatting.

Progressively grows a colored point cloud from generated views and their
estimated depths, then optimizes a differentiable 3D Gaussian scene over
those views in two stages. Subpackages:

    geometry   cameras, depth maps, masks, point-cloud growth ops
    splat      Gaussian scene + differentiable CPU rasterizer
    optim      loss, optimizer, densification, training loop
    providers  generative-model contract, synthetic oracle, HTTP client
    pipeline   two-stage scene synthesis and artifact persistence
    ply        splat PLY import/export
    metrics    PSNR/SSIM evaluation
    cli        command-line entry point
"""

__version__ = "0.1.0"
