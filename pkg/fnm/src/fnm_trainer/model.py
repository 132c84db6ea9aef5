"""A small strided conv encoder that regresses one (dx, dy) per frame pair."""

import torch
from torch import nn

#: Labels are divided by this before the loss so targets stay O(1).
LABEL_NORM = 64.0


class FlowRegressor(nn.Module):
    """Six strided convolutions, global average pooling, linear head.

    Input is a (2, H, W) stack of the two frames; the output is the
    translation between them in net pixels / LABEL_NORM. Batch norm
    after each conv keeps the tiny-dataset optimization well conditioned.
    """

    def __init__(self):
        super().__init__()
        chans = [2, 16, 32, 48, 64, 96, 96]
        layers = []
        for cin, cout in zip(chans, chans[1:]):
            layers += [
                nn.Conv2d(cin, cout, 3, stride=2, padding=1),
                nn.BatchNorm2d(cout, momentum=0.05),
                nn.LeakyReLU(0.1),
            ]
        self.encoder = nn.Sequential(*layers)
        self.head = nn.Linear(chans[-1], 2)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        z = self.encoder(x)
        z = z.mean(dim=(2, 3))
        return self.head(z)

    def predict_net_pixels(self, x: torch.Tensor) -> torch.Tensor:
        return self.forward(x) * LABEL_NORM
